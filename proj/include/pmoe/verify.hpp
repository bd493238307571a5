#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pmoe {

/// Outcome of one oracle property over a family of random instances.
struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  std::uint64_t worst_seed = 0;  // instance seed with the largest deviation
};

struct VerifyConfig {
  std::size_t trials = 200;       // equivalence instances per property
  std::size_t grad_trials = 50;   // finite-difference instances
  std::uint64_t seed = 0;
};

/// Instance seed k of a property run.
std::uint64_t instance_seed(std::uint64_t seed, std::size_t k);

/// moe_head_row against every row of every head, and the MSA built from MoE
/// rows against msa_forward. N ≤ 8, d ≤ 16, m ≤ 4. Tolerance 1e-10.
PropertyResult check_attention_moe(std::size_t trials, std::uint64_t seed);
/// prefix_moe_head_row against prefix_attention heads, L ≤ 4. Tolerance 1e-10.
PropertyResult check_prefix_moe(std::size_t trials, std::uint64_t seed);
/// norga_moe_row against norga_attention with α ≠ 0. Tolerance 1e-10.
PropertyResult check_norga_moe(std::size_t trials, std::uint64_t seed);
/// Every gate row sums to one. Tolerance 1e-12.
PropertyResult check_gate_simplex(std::size_t trials, std::uint64_t seed);
/// α = 0 reproduces plain prefix tuning. Tolerance 1e-12.
PropertyResult check_norga_reduction(std::size_t trials, std::uint64_t seed);
/// The pretrain block of the gated score matrix equals the ungated one bit for bit.
PropertyResult check_pretrain_block(std::size_t trials, std::uint64_t seed);
/// Autodiff gradients of a NoRGa MSA output with respect to p^K, p^V, α, τ
/// against central differences (step 1e-5). Deviation is the norm-wise
/// relative error per parameter; tolerance 1e-5.
PropertyResult check_norga_gradients(std::size_t trials, std::uint64_t seed);

/// All of the above.
std::vector<PropertyResult> run_oracle_suite(const VerifyConfig& cfg);

}  // namespace pmoe
