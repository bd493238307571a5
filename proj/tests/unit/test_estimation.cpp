#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmoe/error.hpp"
#include "pmoe/estimation/degenerate.hpp"
#include "pmoe/estimation/fit.hpp"
#include "pmoe/estimation/independence.hpp"
#include "pmoe/estimation/model.hpp"
#include "pmoe/estimation/rates.hpp"
#include "pmoe/estimation/voronoi.hpp"
#include "pmoe/rng.hpp"

using namespace pmoe;
using namespace pmoe::estimation;

namespace {

// Regression function written out term by term for identity experts.
double oracle_g(const std::vector<double>& x, const Problem& p, const MixingMeasure& g) {
  std::vector<double> s, f;
  const auto& bank = p.model.bank;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const Matrix& b = bank.b[j];
    s.push_back(x[0] * (b(0, 0) * x[0] + b(0, 1) * x[1]) + x[1] * (b(1, 0) * x[0] + b(1, 1) * x[1]) + bank.c[j]);
    f.push_back(bank.eta0[j][0] * x[0] + bank.eta0[j][1] * x[1] + bank.eta0[j][2]);
  }
  for (const auto& a : g.atoms) {
    const double u = a.beta1[0] * x[0] + a.beta1[1] * x[1];
    const double score = p.model.gate.kind == GateKind::Kind::Linear
                             ? u
                             : u + p.model.gate.alpha * activate(p.model.gate.activation, p.model.gate.tau * u);
    s.push_back(score + a.beta0);
    f.push_back(a.eta[0] * x[0] + a.eta[1] * x[1] + a.eta[2]);
  }
  double z = 0.0, num = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    z += std::exp(s[k]);
    num += std::exp(s[k]) * f[k];
  }
  return num / z;
}

MixingMeasure perturbed(const MixingMeasure& g, double scale, std::uint64_t seed) {
  Rng rng(seed);
  MixingMeasure out = g;
  for (auto& a : out.atoms) {
    a.beta0 += scale * rng.uniform(-1, 1);
    for (double& v : a.beta1) v += scale * rng.uniform(-1, 1);
    for (double& v : a.eta) v += scale * rng.uniform(-1, 1);
  }
  return out;
}

double param_distance(const MixingMeasure& a, const MixingMeasure& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    d = std::max(d, std::abs(a.atoms[j].beta0 - b.atoms[j].beta0));
    for (std::size_t k = 0; k < a.atoms[j].beta1.size(); ++k)
      d = std::max(d, std::abs(a.atoms[j].beta1[k] - b.atoms[j].beta1[k]));
    for (std::size_t k = 0; k < a.atoms[j].eta.size(); ++k)
      d = std::max(d, std::abs(a.atoms[j].eta[k] - b.atoms[j].eta[k]));
  }
  return d;
}

}  // namespace

TEST_CASE("regression function matches the term-by-term oracle") {
  for (GateKind gate : {GateKind::norga(Activation::Tanh, 0.8, 1.3), GateKind::linear()}) {
    const Problem p = default_problem(gate);
    Rng rng(41);
    for (int k = 0; k < 50; ++k) {
      const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      CHECK(regression_fn(x, p.model, p.g_star) == doctest::Approx(oracle_g(x, p, p.g_star)).epsilon(1e-13));
    }
  }
}

TEST_CASE("regression function contracts") {
  const Problem p = default_problem(GateKind::norga(Activation::Tanh));
  MixingMeasure out = p.g_star;
  out.atoms[0].beta0 = 5.0;
  const std::vector<double> x{0.1, 0.2};
  CHECK_THROWS_AS(regression_fn(x, p.model, out), DomainError);
  const std::vector<double> x3{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(regression_fn(x3, p.model, p.g_star), DimensionError);
  CHECK_THROWS_AS(generate_dataset(p.model, p.g_star, 0, 0.1, p.mu, 1), ConfigError);
  CHECK_THROWS_AS(generate_dataset(p.model, p.g_star, 10, -0.1, p.mu, 1), ConfigError);
}

TEST_CASE("dataset noise has the configured mean and variance") {
  const Problem p = default_problem(GateKind::norga(Activation::Tanh));
  const double nu = 0.3;
  const std::size_t n = 20000;
  const auto data = generate_dataset(p.model, p.g_star, n, nu, p.mu, 5);
  double mean = 0.0, sq = 0.0;
  for (const auto& s : data) {
    CHECK(s.x[0] >= -1.0);
    CHECK(s.x[1] < 1.0);
    const double e = s.y - regression_fn(s.x, p.model, p.g_star);
    mean += e;
    sq += e * e;
  }
  mean /= n;
  const double var = sq / n - mean * mean;
  // Five standard errors of the sample mean and variance.
  CHECK(std::abs(mean) < 5.0 * nu / std::sqrt(double(n)));
  CHECK(std::abs(var - nu * nu) < 5.0 * nu * nu * std::sqrt(2.0 / n));
  const auto again = generate_dataset(p.model, p.g_star, n, nu, p.mu, 5);
  CHECK(again.back().y == data.back().y);
}

TEST_CASE("regression jacobian matches central differences") {
  const Problem p = default_problem(GateKind::norga(Activation::Gelu, 0.9, 1.2));
  const MixingMeasure g = perturbed(p.g_star, 0.3, 3);
  const std::vector<double> x{0.35, -0.6};
  const Vec jac = regression_jacobian(x, p.model, g, true);
  REQUIRE(jac.size() == g.size() * 6 + 2);
  const double h = 1e-6;
  std::size_t col = 0;
  auto fd = [&](auto&& poke) {
    MixingMeasure a = g, b = g;
    RegressionModel ma = p.model, mb = p.model;
    poke(a, ma, h);
    poke(b, mb, -h);
    return (regression_fn_unchecked(x, ma, a) - regression_fn_unchecked(x, mb, b)) / (2 * h);
  };
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(jac[col++] == doctest::Approx(fd([&](MixingMeasure& m, RegressionModel&, double e) { m.atoms[j].beta0 += e; })).epsilon(1e-7));
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(jac[col++] == doctest::Approx(fd([&](MixingMeasure& m, RegressionModel&, double e) { m.atoms[j].beta1[k] += e; })).epsilon(1e-7));
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(jac[col++] == doctest::Approx(fd([&](MixingMeasure& m, RegressionModel&, double e) { m.atoms[j].eta[k] += e; })).epsilon(1e-7));
  }
  CHECK(jac[col++] == doctest::Approx(fd([](MixingMeasure&, RegressionModel& m, double e) { m.gate.alpha += e; })).epsilon(1e-7));
  CHECK(jac[col++] == doctest::Approx(fd([](MixingMeasure&, RegressionModel& m, double e) { m.gate.tau += e; })).epsilon(1e-7));
}

TEST_CASE("fit started at the truth on noiseless data does not move") {
  const Problem p = default_problem(GateKind::norga(Activation::Tanh));
  const auto data = generate_dataset(p.model, p.g_star, 400, 0.0, p.mu, 9);
  FitConfig cfg;
  cfg.restarts = 0;
  cfg.initial = {p.g_star};
  const FitResult r = least_squares_fit(data, p.model, 2, cfg);
  CHECK(r.objective < 1e-20);
  CHECK(param_distance(r.measure, p.g_star) < 1e-9);
}

TEST_CASE("one extra atom never fits worse than the exact count") {
  const Problem p = default_problem(GateKind::linear());
  const auto data = generate_dataset(p.model, p.g_star, 300, 0.1, p.mu, 10);
  FitConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 4;
  const FitResult two = least_squares_fit(data, p.model, 2, cfg);
  // Split the heavier atom into two halves: the same regression function with three atoms.
  MixingMeasure split = two.measure;
  const std::size_t heavy = split.atoms[0].beta0 >= split.atoms[1].beta0 ? 0 : 1;
  split.atoms[heavy].beta0 -= std::log(2.0);
  split.atoms.push_back(split.atoms[heavy]);
  REQUIRE(p.model.box.contains(split));
  CHECK(least_squares_objective(data, p.model, split) == doctest::Approx(two.objective).epsilon(1e-10));
  FitConfig three_cfg = cfg;
  three_cfg.restarts = 0;
  three_cfg.initial = {split};
  const FitResult three = least_squares_fit(data, p.model, 3, three_cfg);
  CHECK(three.objective <= two.objective * (1.0 + 1e-12));
}

TEST_CASE("single pretrained expert and single prompt atom are recovered from noiseless data") {
  Problem p;
  p.model.bank.b = {Matrix{{-0.5, 0.2}, {0.2, -0.4}}};
  p.model.bank.c = {0.3};
  p.model.bank.eta0 = {{0.5, -0.7, 0.2}};
  p.model.gate = GateKind::norga(Activation::Tanh);
  p.g_star.atoms = {Atom{0.5, {1.2, -0.8}, {-1.0, 1.4, 0.6}}};
  const auto data = generate_dataset(p.model, p.g_star, 2000, 0.0, p.mu, 12);
  FitConfig cfg;
  cfg.restarts = 8;
  cfg.seed = 1;
  const FitResult r = least_squares_fit(data, p.model, 1, cfg);
  CHECK(r.converged);
  CHECK(param_distance(r.measure, p.g_star) < 1e-3);
}

TEST_CASE("fit rejects bad configurations") {
  const Problem p = default_problem(GateKind::linear());
  const auto data = generate_dataset(p.model, p.g_star, 20, 0.1, p.mu, 1);
  FitConfig cfg;
  CHECK_THROWS_AS(least_squares_fit(data, p.model, 0, cfg), ConfigError);
  cfg.restarts = -1;
  CHECK_THROWS_AS(least_squares_fit(data, p.model, 2, cfg), ConfigError);
  cfg.restarts = 0;
  CHECK_THROWS_AS(least_squares_fit(data, p.model, 2, cfg), ConfigError);
  CHECK_THROWS_AS(least_squares_fit({}, p.model, 2, FitConfig{}), ConfigError);
}

TEST_CASE("voronoi cells and losses match a brute-force oracle") {
  Rng rng(50);
  const Problem p = default_problem(GateKind::linear());
  for (int trial = 0; trial < 30; ++trial) {
    MixingMeasure g;
    const std::size_t m = 1 + rng.below(4);
    for (std::size_t i = 0; i < m; ++i)
      g.atoms.push_back(Atom{rng.uniform(-2, 2), {rng.uniform(-2, 2), rng.uniform(-2, 2)},
                             {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}});
    const auto cells = voronoi_cells(g, p.g_star);
    double l1 = 0.0, l2 = 0.0;
    std::vector<std::vector<std::size_t>> brute(p.g_star.size());
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> d;
      for (const auto& s : p.g_star.atoms) {
        double acc = 0.0;
        for (int k = 0; k < 2; ++k) acc += std::pow(g.atoms[i].beta1[k] - s.beta1[k], 2);
        for (int k = 0; k < 3; ++k) acc += std::pow(g.atoms[i].eta[k] - s.eta[k], 2);
        d.push_back(acc);
      }
      brute[std::min_element(d.begin(), d.end()) - d.begin()].push_back(i);
    }
    CHECK(cells == brute);
    for (std::size_t j = 0; j < brute.size(); ++j) {
      const Atom& s = p.g_star.atoms[j];
      double mass = 0.0;
      for (std::size_t i : brute[j]) {
        const Atom& a = g.atoms[i];
        mass += std::exp(a.beta0);
        const double db = std::hypot(a.beta1[0] - s.beta1[0], a.beta1[1] - s.beta1[1]);
        const double de = std::sqrt(std::pow(a.eta[0] - s.eta[0], 2) + std::pow(a.eta[1] - s.eta[1], 2) +
                                    std::pow(a.eta[2] - s.eta[2], 2));
        const double da = std::hypot(a.eta[0] - s.eta[0], a.eta[1] - s.eta[1]);
        l1 += std::exp(a.beta0) * (brute[j].size() == 1 ? db + de : db * db + de * de);
        l2 += std::exp(a.beta0) * (db + da + std::abs(a.eta[2] - s.eta[2]));
      }
      l1 += std::abs(mass - std::exp(s.beta0));
      l2 += std::abs(mass - std::exp(s.beta0));
    }
    CHECK(voronoi_loss_l1(g, p.g_star) == doctest::Approx(l1).epsilon(1e-12));
    CHECK(voronoi_loss_l2r(g, p.g_star, 1.0) == doctest::Approx(l2).epsilon(1e-12));
  }
}

TEST_CASE("L1 loss is first order in singleton cells and second order in shared cells") {
  const Problem p = default_problem(GateKind::linear());
  const double w = std::exp(p.g_star.atoms[0].beta0);
  for (double delta : {1e-2, 1e-3}) {
    MixingMeasure one = p.g_star;
    one.atoms[0].beta1[0] += delta;
    CHECK(voronoi_loss_l1(one, p.g_star) == doctest::Approx(w * delta).epsilon(1e-9));

    MixingMeasure two = p.g_star;
    Atom half = two.atoms[0];
    half.beta0 -= std::log(2.0);
    Atom plus = half, minus = half;
    plus.eta[2] += delta;
    minus.eta[2] -= delta;
    two.atoms[0] = plus;
    two.atoms.push_back(minus);
    CHECK(voronoi_loss_l1(two, p.g_star) == doctest::Approx(w * delta * delta).epsilon(1e-9));
  }
  CHECK(voronoi_loss_l1(p.g_star, p.g_star) == 0.0);
}

TEST_CASE("L2r loss decreases in r for sub-unit perturbations") {
  const Problem p = default_problem(GateKind::linear());
  MixingMeasure g = perturbed(p.g_star, 0.2, 8);
  double prev = std::numeric_limits<double>::infinity();
  for (double r : {1.0, 1.5, 2.0, 3.0}) {
    const double v = voronoi_loss_l2r(g, p.g_star, r);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(voronoi_loss_l2r(g, p.g_star, 0.5), ConfigError);
  CHECK_THROWS_AS(voronoi_cells(MixingMeasure{}, p.g_star), ContractError);
}

TEST_CASE("degenerate sequence loss equals the closed form") {
  const Problem p = default_problem(GateKind::linear());
  const double w = std::exp(p.g_star.atoms[0].beta0);
  for (double r : {1.0, 2.0}) {
    for (double n : {4.0, 10.0, 37.0}) {
      const MixingMeasure gn = degenerate_sequence(p.g_star, n, r);
      CHECK(gn.size() == p.g_star.size() + 1);
      const double expected = std::pow(n, -(r + 1)) + (w + std::pow(n, -(r + 1))) * std::pow(n, -r);
      CHECK(std::abs(voronoi_loss_l2r(gn, p.g_star, r) - expected) < 1e-12);
      CHECK(std::abs(degenerate_closed_form(p.g_star, n, r) - expected) < 1e-15);
    }
  }
  CHECK_THROWS_AS(degenerate_sequence(p.g_star, 0.5), ConfigError);
}

TEST_CASE("function distance vanishes faster than the loss along the sequence") {
  const Problem p = default_problem(GateKind::linear());
  const auto curve = degenerate_curve(p, {4.0, 64.0}, 1.0, 20000, 3);
  REQUIRE(curve.size() == 2);
  CHECK(curve[1].ratio < 0.5 * curve[0].ratio);
  const Problem relu = default_problem(GateKind::linear(), ExpertKind::Relu);
  CHECK_THROWS_AS(degenerate_curve(relu, {4.0}, 1.0, 100, 3), ConfigError);
}

TEST_CASE("algebraic independence of expert and gate families") {
  const Problem p = default_problem(GateKind::norga(Activation::Tanh));
  const auto gelu = check_algebraic_independence(ExpertKind::Gelu, Activation::Tanh, 2, 2, p.model.box, p.mu, 1);
  CHECK_MESSAGE(gelu.independent, gelu.diagnostic);
  const auto ident = check_algebraic_independence(ExpertKind::Identity, Activation::Tanh, 2, 2, p.model.box, p.mu, 1);
  CHECK_FALSE(ident.independent);
  const auto cst = check_algebraic_independence(ExpertKind::Constant, Activation::Tanh, 1, 2, p.model.box, p.mu, 1);
  CHECK_FALSE(cst.independent);

  MixingMeasure dup;
  dup.atoms = {p.g_star.atoms[0], p.g_star.atoms[0]};
  const Matrix grid = sample_inputs(p.mu, 2, 400, 2);
  CHECK_FALSE(check_algebraic_independence(ExpertKind::Gelu, Activation::Tanh, dup, grid).independent);

  const Matrix tiny = sample_inputs(p.mu, 2, 5, 2);
  const auto few = check_algebraic_independence(ExpertKind::Gelu, Activation::Tanh, p.g_star, tiny);
  CHECK_FALSE(few.independent);
  CHECK_FALSE(few.diagnostic.empty());
}

TEST_CASE("quartiles interpolate linearly") {
  const auto q = quartiles({4.0, 1.0, 3.0, 2.0});
  CHECK(q.q1 == doctest::Approx(1.75));
  CHECK(q.median == doctest::Approx(2.5));
  CHECK(q.q3 == doctest::Approx(3.25));
  CHECK_THROWS_AS(quartiles({}), ContractError);
}

TEST_CASE("log-log slope and its t interval") {
  const std::vector<double> x{1, 2, 4, 8};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
  const auto exact = loglog_slope(x, y);
  CHECK(exact.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(exact.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(exact.half_width < 1e-10);

  const std::vector<double> jitter{0.1, -0.05, -0.1, 0.05};
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= std::exp(jitter[i]);
  const auto fit = loglog_slope(x, y);
  // OLS by hand on (log x, log y), t quantile 0.975 with 2 degrees of freedom.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    mx += std::log(x[i]) / 4;
    my += std::log(y[i]) / 4;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxx += std::pow(std::log(x[i]) - mx, 2);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  const double b = sxy / sxx, a = my - b * mx;
  double sse = 0;
  for (std::size_t i = 0; i < 4; ++i) sse += std::pow(std::log(y[i]) - a - b * std::log(x[i]), 2);
  CHECK(fit.slope == doctest::Approx(b).epsilon(1e-12));
  CHECK(fit.half_width == doctest::Approx(4.302652729911275 * std::sqrt(sse / 2 / sxx)).epsilon(1e-9));
  CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), ContractError);
  CHECK_THROWS_AS(loglog_slope({1.0, 2.0}, {1.0, -1.0}), DomainError);
}

TEST_CASE("rate experiment is deterministic across worker counts") {
  const Problem p = default_problem(GateKind::norga(Activation::Tanh));
  RateConfig cfg;
  cfg.ns = {100, 200};
  cfg.trials = 2;
  cfg.mc_points = 500;
  cfg.fit.restarts = 2;
  cfg.fit.max_iterations = 50;
  const RateResult a = rate_experiment(p, cfg);
  cfg.jobs = 2;
  const RateResult b = rate_experiment(p, cfg);
  REQUIRE(a.records.size() == 4);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].n == b.records[k].n);
    CHECK(a.records[k].loss_l1 == b.records[k].loss_l1);
    CHECK(a.records[k].l2mu_error == b.records[k].l2mu_error);
    CHECK_FALSE(a.records[k].failed);
  }
  CHECK(a.records.front().n == 100);
  CHECK(a.rows.size() == 2);
  cfg.trials = 0;
  CHECK_THROWS_AS(rate_experiment(p, cfg), ConfigError);
}
