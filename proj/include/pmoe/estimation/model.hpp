#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pmoe/matrix.hpp"
#include "pmoe/tensor.hpp"

namespace pmoe::estimation {

using Vec = std::vector<double>;

/// One prompt expert: weight exp(beta0), gating vector beta1 ∈ ℝ^{Nd} and
/// expert parameters eta = (a, b) ∈ ℝ^{Nd} × ℝ.
struct Atom {
  double beta0 = 0.0;
  Vec beta1;
  Vec eta;

  double weight() const;
  /// (beta1, eta), the point used for Voronoi assignment.
  Vec location() const;
};

/// G = Σ exp(β₀ⱼ) δ_{(β₁ⱼ, ηⱼ)}.
struct MixingMeasure {
  std::vector<Atom> atoms;

  std::size_t size() const noexcept { return atoms.size(); }
  std::size_t input_dim() const;
  std::size_t expert_dim() const;
};

/// Componentwise bounds of the compact parameter set Θ.
struct ParameterBox {
  double beta0_lo = -2.0, beta0_hi = 2.0;
  double beta1_lo = -2.0, beta1_hi = 2.0;
  double eta_lo = -2.0, eta_hi = 2.0;

  bool contains(const Atom& a) const;
  bool contains(const MixingMeasure& g) const;
  void project(Atom& a) const;
};

enum class ExpertKind { Identity, Relu, Gelu, Constant };

std::string to_string(ExpertKind k);
ExpertKind parse_expert(const std::string& name);

/// h(X, (a, b)) = φ(aᵀX + b); Identity is the p = 1 polynomial expert.
/// Constant ignores X and a: h = b.
struct ExpertFn {
  ExpertKind kind = ExpertKind::Identity;

  double value(std::span<const double> x, std::span<const double> eta) const;
  /// ∂h/∂eta written into `out` (length q = Nd + 1).
  void gradient(std::span<const double> x, std::span<const double> eta,
                std::span<double> out) const;
  /// ∂²h/∂eta_k∂eta_l.
  double hessian(std::span<const double> x, std::span<const double> eta, std::size_t k,
                 std::size_t l) const;
};

/// How prompt atoms are scored. Linear: β₁ᵀX + β₀. Norga: u + α·σ(τ·u) + β₀
/// with u = β₁ᵀX.
struct GateKind {
  enum class Kind { Linear, Norga };
  Kind kind = Kind::Norga;
  Activation activation = Activation::Tanh;
  double alpha = 1.0;
  double tau = 1.0;

  static GateKind linear() { return {Kind::Linear, Activation::Tanh, 0.0, 0.0}; }
  static GateKind norga(Activation act, double alpha = 1.0, double tau = 1.0) {
    return {Kind::Norga, act, alpha, tau};
  }

  /// Score without β₀ as a function of u = β₁ᵀX.
  double score(double u) const;
  /// d score / du.
  double score_slope(double u) const;
  std::string name() const;
};

/// Frozen quadratic gates of the N pretrained experts: XᵀB⁰ⱼX + c⁰ⱼ, with
/// expert parameters η⁰ⱼ.
struct PretrainedGateBank {
  std::vector<Matrix> b;
  Vec c;
  std::vector<Vec> eta0;

  std::size_t size() const noexcept { return b.size(); }
  std::size_t input_dim() const { return b.empty() ? 0 : b.front().rows(); }
  void validate() const;
};

struct RegressionModel {
  PretrainedGateBank bank;
  GateKind gate;
  ExpertFn expert;
  ParameterBox box;
};

/// Softmax weights over the N pretrained then ℓ prompt components at X.
Vec mixture_weights(std::span<const double> x, const RegressionModel& model,
                    const MixingMeasure& g);

/// g_G(X). Throws DomainError if an atom lies outside the box.
double regression_fn(std::span<const double> x, const RegressionModel& model,
                     const MixingMeasure& g);

/// Same as regression_fn without the domain check.
double regression_fn_unchecked(std::span<const double> x, const RegressionModel& model,
                               const MixingMeasure& g);

struct RegressionSample {
  Vec x;
  double y = 0.0;
};

/// μ: uniform on [lo, hi]^{Nd}.
struct InputDistribution {
  double lo = -1.0;
  double hi = 1.0;
};

/// `count` × Nd design drawn from μ.
Matrix sample_inputs(const InputDistribution& mu, std::size_t dim, std::size_t count,
                     std::uint64_t seed);

/// Y = g_{G*}(X) + ε, ε ~ Normal(0, ν²).
std::vector<RegressionSample> generate_dataset(const RegressionModel& model,
                                               const MixingMeasure& g_star, std::size_t n,
                                               double nu, const InputDistribution& mu,
                                               std::uint64_t seed);

/// Monte Carlo ‖g_G − g_H‖_{L²(μ)} over the rows of `points`.
double l2_distance(const RegressionModel& model, const MixingMeasure& g, const MixingMeasure& h,
                   const Matrix& points);

/// The default testbed: Nd = 2, N = 2 pretrained experts, L = 2 prompt atoms.
struct Problem {
  RegressionModel model;
  MixingMeasure g_star;
  InputDistribution mu;
};

Problem default_problem(GateKind gate, ExpertKind expert = ExpertKind::Identity);

}  // namespace pmoe::estimation
