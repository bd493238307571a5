#include "pmoe/verify.hpp"

#include <algorithm>
#include <cmath>

#include "pmoe/attention.hpp"
#include "pmoe/moe_view.hpp"
#include "pmoe/norga.hpp"
#include "pmoe/rng.hpp"

namespace pmoe {

std::uint64_t instance_seed(std::uint64_t seed, std::size_t k) {
  return splitmix64_mix(splitmix64_mix(seed) + static_cast<std::uint64_t>(k));
}

namespace {

struct Instance {
  Matrix x;
  MsaParams msa;
  Prefix prefix;
};

constexpr Activation kActivations[] = {Activation::Tanh, Activation::Sigmoid, Activation::Gelu};

Instance draw_instance(Rng& rng, bool with_prefix) {
  const std::size_t n = 1 + rng.below(8);
  const std::size_t m = 1 + rng.below(4);
  const std::size_t dh = 1 + rng.below(16 / m);
  const std::size_t d = m * dh;
  Instance in;
  in.x = uniform_matrix(rng, n, d, -1.0, 1.0);
  in.msa = random_msa(rng, d, m);
  // Larger projections keep the softmax away from uniform.
  for (auto& h : in.msa.heads)
    for (Tensor* w : {&h.w_q, &h.w_k, &h.w_v})
      for (double& v : w->mutable_value().data()) v *= 4.0;
  if (with_prefix) in.prefix = random_prefix(rng, 1 + rng.below(4), d);
  return in;
}

Activation draw_activation(Rng& rng) { return kActivations[rng.below(3)]; }

template <class Body>
PropertyResult run_property(const std::string& name, double tol, std::size_t trials, std::uint64_t seed,
                            Body body) {
  PropertyResult r;
  r.name = name;
  r.tolerance = tol;
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t s = instance_seed(seed, k);
    Rng rng(s);
    const double dev = body(rng);
    ++r.instances;
    if (k == 0 || !(dev <= r.max_deviation)) {
      r.max_deviation = dev;
      r.worst_seed = s;
    }
    if (!(dev < tol)) r.passed = false;
  }
  if (trials == 0) r.passed = false;
  return r;
}

double row_dev(const std::vector<double>& a, const Matrix& m, std::size_t row) {
  return max_abs_diff(std::span<const double>(a), m.row(row));
}

}  // namespace

PropertyResult check_attention_moe(std::size_t trials, std::uint64_t seed) {
  return run_property("attention-moe equivalence", 1e-10, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, false);
    const Tensor x(in.x);
    double dev = 0.0;
    std::vector<Tensor> heads;
    for (const auto& h : in.msa.heads) {
      const Matrix out = head_forward(x, h).value();
      Matrix rows(in.x.rows(), h.d_head());
      for (std::size_t i = 0; i < in.x.rows(); ++i) {
        const auto r = moe_head_row(in.x, h, i);
        dev = std::max(dev, row_dev(r, out, i));
        std::copy(r.begin(), r.end(), rows.row(i).begin());
      }
      heads.push_back(Tensor(rows));
    }
    const Matrix msa = msa_forward(x, in.msa).value();
    const Matrix via_moe = matmul(concat_cols(heads).value(), in.msa.w_o.value());
    return std::max(dev, max_abs_diff(msa, via_moe));
  });
}

PropertyResult check_prefix_moe(std::size_t trials, std::uint64_t seed) {
  return run_property("prefix-moe equivalence", 1e-10, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, true);
    const Tensor x(in.x);
    double dev = 0.0;
    for (const auto& h : in.msa.heads) {
      const Matrix out = prefix_head_forward(x, h, in.prefix).value();
      for (std::size_t i = 0; i < in.x.rows(); ++i)
        dev = std::max(dev, row_dev(prefix_moe_head_row(in.x, h, in.prefix, i), out, i));
    }
    return dev;
  });
}

PropertyResult check_norga_moe(std::size_t trials, std::uint64_t seed) {
  return run_property("norga-moe equivalence", 1e-10, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, true);
    const NorgaGate gate = NorgaGate::fixed(draw_activation(rng), rng.uniform(-2.0, 2.0), rng.uniform(0.1, 2.0));
    const Tensor x(in.x);
    double dev = 0.0;
    for (const auto& h : in.msa.heads) {
      const Matrix out = norga_attention(x, h, in.prefix, gate).value();
      for (std::size_t i = 0; i < in.x.rows(); ++i)
        dev = std::max(dev, row_dev(norga_moe_row(in.x, h, in.prefix, gate, i), out, i));
    }
    return dev;
  });
}

PropertyResult check_gate_simplex(std::size_t trials, std::uint64_t seed) {
  return run_property("gate weights sum to one", 1e-12, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, true);
    const NorgaGate gate = NorgaGate::fixed(draw_activation(rng), rng.uniform(-2.0, 2.0), rng.uniform(0.1, 2.0));
    const ScoreMap map = [&gate](double s) { return norga_score(s, gate); };
    double dev = 0.0;
    for (const auto& h : in.msa.heads)
      for (std::size_t i = 0; i < in.x.rows(); ++i) {
        for (const ScoreMap* f : {static_cast<const ScoreMap*>(nullptr), &map}) {
          const auto w = gate_weights(in.x, h, in.prefix, i, f ? *f : ScoreMap{});
          double total = 0.0;
          for (double v : w) {
            if (v < 0.0) return 1.0;
            total += v;
          }
          dev = std::max(dev, std::abs(total - 1.0));
        }
      }
    return dev;
  });
}

PropertyResult check_norga_reduction(std::size_t trials, std::uint64_t seed) {
  return run_property("norga alpha=0 reduction", 1e-12, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, true);
    const NorgaGate gate = NorgaGate::fixed(draw_activation(rng), 0.0, rng.uniform(0.1, 2.0));
    const Tensor x(in.x);
    return max_abs_diff(norga_msa(x, in.msa, in.prefix, gate).value(),
                        prefix_attention(x, in.msa, in.prefix).value());
  });
}

PropertyResult check_pretrain_block(std::size_t trials, std::uint64_t seed) {
  // Any difference at all fails: the block must be the same bits.
  return run_property("pretrain block untouched", 1e-300, trials, seed, [](Rng& rng) {
    const Instance in = draw_instance(rng, true);
    const NorgaGate gate = NorgaGate::fixed(draw_activation(rng), rng.uniform(0.5, 2.0), rng.uniform(0.1, 2.0));
    const Tensor x(in.x);
    for (const auto& h : in.msa.heads) {
      const AttentionScores gated = norga_attention_matrix(x, h, in.prefix, gate);
      const AttentionScores plain = attention_matrix(x, h, in.prefix);
      if (gated.pretrain.value().data() != plain.pretrain.value().data()) return 1.0;
    }
    return 0.0;
  });
}

PropertyResult check_norga_gradients(std::size_t trials, std::uint64_t seed) {
  return run_property("norga gradients vs finite differences", 1e-5, trials, seed, [](Rng& rng) {
    Instance in = draw_instance(rng, true);
    NorgaGate gate = NorgaGate::learnable(draw_activation(rng), rng.uniform(-1.5, 1.5), rng.uniform(0.3, 1.5));
    in.prefix.p_k.set_requires_grad(true);
    in.prefix.p_v.set_requires_grad(true);
    const Tensor x(in.x);
    const Tensor weights(uniform_matrix(rng, in.x.rows(), in.x.cols(), -1.0, 1.0));
    auto loss = [&] { return sum(mul(norga_msa(x, in.msa, in.prefix, gate), weights)); };

    const Tensor l = loss();
    backward(l);
    std::vector<Tensor> params{in.prefix.p_k, in.prefix.p_v, gate.alpha, gate.tau};
    double worst = 0.0;
    const double h = 1e-5;
    for (Tensor& p : params) {
      const Matrix ad = p.grad();
      Matrix fd(ad.rows(), ad.cols());
      auto& v = p.mutable_value().data();
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double keep = v[k];
        v[k] = keep + h;
        const double up = loss().item();
        v[k] = keep - h;
        const double down = loss().item();
        v[k] = keep;
        fd.data()[k] = (up - down) / (2.0 * h);
      }
      double diff = 0.0, na = 0.0, nf = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) {
        diff += (ad.data()[k] - fd.data()[k]) * (ad.data()[k] - fd.data()[k]);
        na += ad.data()[k] * ad.data()[k];
        nf += fd.data()[k] * fd.data()[k];
      }
      const double denom = std::max({std::sqrt(na), std::sqrt(nf), 1e-6});
      worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
  });
}

std::vector<PropertyResult> run_oracle_suite(const VerifyConfig& cfg) {
  return {
      check_attention_moe(cfg.trials, cfg.seed),
      check_prefix_moe(cfg.trials, cfg.seed + 1),
      check_norga_moe(cfg.trials, cfg.seed + 2),
      check_gate_simplex(cfg.trials, cfg.seed + 3),
      check_norga_reduction(cfg.trials, cfg.seed + 4),
      check_pretrain_block(cfg.trials, cfg.seed + 5),
      check_norga_gradients(cfg.grad_trials, cfg.seed + 6),
  };
}

}  // namespace pmoe
