#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "pmoe/error.hpp"
#include "pmoe/rng.hpp"
#include "pmoe/tensor.hpp"

using namespace pmoe;

TEST_CASE("rng streams are reproducible and split independently") {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng child = c.split();
  CHECK(child.next_u64() != c.next_u64());

  Rng u(3);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double z = u.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("matmul matches hand computation and rejects bad shapes") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5}, {6}};
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 17.0);
  CHECK(c(1, 0) == 39.0);
  CHECK_THROWS_AS(matmul(b, b), DimensionError);
}

TEST_CASE("softmax rows are stable for large scores") {
  const Matrix s{{1000.0, 1000.0, 999.0}, {-1000.0, 0.0, 1000.0}};
  const Matrix p = softmax_rows(s);
  CHECK(p.all_finite());
  const double e = std::exp(-1.0);
  CHECK(p(0, 0) == doctest::Approx(1.0 / (2.0 + e)).epsilon(1e-14));
  CHECK(p(0, 2) == doctest::Approx(e / (2.0 + e)).epsilon(1e-14));
  CHECK(p(1, 2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("activation derivatives agree with finite differences") {
  for (Activation act : {Activation::Tanh, Activation::Sigmoid, Activation::Gelu}) {
    for (double x : {-2.3, -0.4, 0.0, 0.7, 1.9}) {
      const double h = 1e-5;
      const double d1 = (activate(act, x + h) - activate(act, x - h)) / (2 * h);
      const double d2 = (activate_d1(act, x + h) - activate_d1(act, x - h)) / (2 * h);
      CHECK(activate_d1(act, x) == doctest::Approx(d1).epsilon(1e-8));
      CHECK(activate_d2(act, x) == doctest::Approx(d2).epsilon(1e-7));
    }
  }
  CHECK(activate(Activation::Gelu, 1.0) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))));
  CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
}

namespace {

// Reduces a tensor to a scalar with fixed random weights so every output
// entry contributes to the gradient.
double weighted(const Matrix& y, const Matrix& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += y.data()[k] * w.data()[k];
  return s;
}

void check_unary(const std::function<Tensor(const Tensor&)>& op, const Matrix& x0, double tol = 1e-7) {
  Rng rng(11);
  const Tensor probe = op(Tensor(x0));
  const Matrix w = uniform_matrix(rng, probe.rows(), probe.cols(), -1.0, 1.0);
  Tensor x(x0, true);
  const Tensor loss = sum(mul(op(x), Tensor(w)));
  backward(loss);
  const Matrix num = testing::numeric_grad([&](const Matrix& m) { return weighted(op(Tensor(m)).value(), w); }, x0);
  CHECK(testing::rel_error(x.grad(), num) < tol);
}

}  // namespace

TEST_CASE("autodiff ops match central differences") {
  Rng rng(5);
  const Matrix x = uniform_matrix(rng, 3, 4, -1.5, 1.5);
  const Matrix y = uniform_matrix(rng, 4, 2, -1.0, 1.0);
  check_unary([](const Tensor& t) { return softmax_rows(t); }, x);
  check_unary([](const Tensor& t) { return log_softmax_rows(t); }, x);
  check_unary([](const Tensor& t) { return normalize_rows(t); }, x);
  check_unary([](const Tensor& t) { return activation(t, Activation::Gelu); }, x);
  check_unary([](const Tensor& t) { return activation(t, Activation::Sigmoid); }, x);
  check_unary([&](const Tensor& t) { return matmul(t, Tensor(y)); }, x);
  check_unary([](const Tensor& t) { return mean_rows(exp(scale(t, 0.5))); }, x);
  check_unary([](const Tensor& t) { return concat_rows(slice_rows(t, 1, 3), transpose(slice_cols(transpose(t), 0, 1))); }, x);
  const std::vector<std::size_t> labels{2, 0, 3};
  check_unary([&](const Tensor& t) { return cross_entropy(t, labels); }, x);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x(Matrix(2, 2, 1.0), true);
  CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("normalize_rows rejects a zero row") {
  CHECK_THROWS_AS(normalize_rows(Tensor(Matrix(2, 3, 0.0))), NumericError);
}
