#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "pmoe/attention.hpp"
#include "pmoe/error.hpp"
#include "pmoe/moe_view.hpp"
#include "pmoe/norga.hpp"
#include "pmoe/rng.hpp"
#include "pmoe/verify.hpp"

using namespace pmoe;

TEST_CASE("norga score is s + alpha * sigma(tau * s)") {
  const auto g = NorgaGate::fixed(Activation::Tanh, 0.7, 1.3);
  CHECK(norga_score(0.4, g) == doctest::Approx(0.4 + 0.7 * std::tanh(1.3 * 0.4)).epsilon(1e-15));
  const auto s = NorgaGate::fixed(Activation::Sigmoid, -0.5, 2.0);
  CHECK(norga_score(-1.0, s) == doctest::Approx(-1.0 - 0.5 / (1.0 + std::exp(2.0))).epsilon(1e-15));
}

TEST_CASE("alpha = 0 reproduces prefix tuning") {
  Rng rng(31);
  const MsaParams msa = random_msa(rng, 8, 2);
  const Prefix prefix = random_prefix(rng, 3, 8);
  const Matrix x = uniform_matrix(rng, 5, 8, -1.0, 1.0);
  const auto gate = NorgaGate::fixed(Activation::Gelu, 0.0, 1.7);
  const Matrix a = norga_msa(Tensor(x), msa, prefix, gate).value();
  const Matrix b = prefix_attention(Tensor(x), msa, prefix).value();
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("gating changes only the prompt block") {
  Rng rng(32);
  const HeadParams head = random_head(rng, 6, 3);
  const Prefix prefix = random_prefix(rng, 4, 6);
  const Tensor x(uniform_matrix(rng, 5, 6, -1.0, 1.0));
  const auto gated = norga_attention_matrix(x, head, prefix, NorgaGate::fixed(Activation::Tanh, 1.2, 0.8));
  const auto plain = attention_matrix(x, head, prefix);
  CHECK(gated.pretrain.value().data() == plain.pretrain.value().data());
  CHECK(max_abs_diff(gated.prompt.value(), plain.prompt.value()) > 1e-3);
}

TEST_CASE("norga head rows match the MoE view") {
  Rng rng(33);
  const HeadParams head = random_head(rng, 4, 2);
  const Prefix prefix = random_prefix(rng, 2, 4);
  const Matrix x = uniform_matrix(rng, 3, 4, -1.0, 1.0);
  const auto gate = NorgaGate::fixed(Activation::Sigmoid, 0.9, 1.1);
  const Matrix out = norga_attention(Tensor(x), head, prefix, gate).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(max_abs_diff(out.row(i), norga_moe_row(x, head, prefix, gate, i)) < 1e-13);
}

TEST_CASE("gradients of alpha and tau match central differences") {
  Rng rng(34);
  const MsaParams msa = random_msa(rng, 4, 2);
  const Prefix prefix = random_prefix(rng, 2, 4);
  const Matrix x = uniform_matrix(rng, 3, 4, -1.0, 1.0);
  const Matrix w = uniform_matrix(rng, 3, 4, -1.0, 1.0);
  auto loss_at = [&](double a, double t) {
    const auto g = NorgaGate::fixed(Activation::Tanh, a, t);
    const Matrix y = norga_msa(Tensor(x), msa, prefix, g).value();
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += y.data()[k] * w.data()[k];
    return s;
  };
  auto gate = NorgaGate::learnable(Activation::Tanh, 0.8, 1.4);
  backward(sum(mul(norga_msa(Tensor(x), msa, prefix, gate), Tensor(w))));
  const double h = 1e-6;
  const double da = (loss_at(0.8 + h, 1.4) - loss_at(0.8 - h, 1.4)) / (2 * h);
  const double dt = (loss_at(0.8, 1.4 + h) - loss_at(0.8, 1.4 - h)) / (2 * h);
  CHECK(gate.alpha.grad()(0, 0) == doctest::Approx(da).epsilon(1e-7));
  CHECK(gate.tau.grad()(0, 0) == doctest::Approx(dt).epsilon(1e-7));
}

TEST_CASE("a frozen gate takes no gradient") {
  auto gate = NorgaGate::learnable(Activation::Tanh);
  CHECK(gate.trainable().size() == 2);
  gate.freeze();
  CHECK(gate.trainable().empty());
  CHECK_FALSE(gate.alpha.requires_grad());
}

TEST_CASE("gate adds two scalars per gated layer") {
  CHECK(norga_extra_parameters(12) == 24);
  CHECK(norga_extra_parameters(0) == 0);
}

TEST_CASE("oracle suite passes on a short run and is deterministic") {
  VerifyConfig cfg;
  cfg.trials = 20;
  cfg.grad_trials = 5;
  cfg.seed = 7;
  const auto a = run_oracle_suite(cfg);
  const auto b = run_oracle_suite(cfg);
  REQUIRE(a.size() >= 6);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK_MESSAGE(a[k].passed, a[k].name);
    CHECK(a[k].max_deviation == b[k].max_deviation);
  }
}
