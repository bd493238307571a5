#include "pmoe/estimation/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "pmoe/error.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::estimation {

namespace {

// Bounds for α and τ when they are estimated; not part of Θ.
constexpr double kGateBound = 3.0;

struct Layout {
  std::size_t dim = 0;    // Nd
  std::size_t atoms = 0;  // fitted atom count
  bool with_gate = false;

  std::size_t per_atom() const { return 2 * dim + 2; }
  std::size_t size() const { return atoms * per_atom() + (with_gate ? 2 : 0); }
  std::size_t gate_offset() const { return atoms * per_atom(); }
};

Vec pack(const MixingMeasure& g, const GateKind& gate, const Layout& lay) {
  Vec theta;
  theta.reserve(lay.size());
  for (const auto& a : g.atoms) {
    theta.push_back(a.beta0);
    theta.insert(theta.end(), a.beta1.begin(), a.beta1.end());
    theta.insert(theta.end(), a.eta.begin(), a.eta.end());
  }
  if (lay.with_gate) {
    theta.push_back(gate.alpha);
    theta.push_back(gate.tau);
  }
  return theta;
}

MixingMeasure unpack(std::span<const double> theta, const Layout& lay) {
  MixingMeasure g;
  g.atoms.resize(lay.atoms);
  for (std::size_t j = 0; j < lay.atoms; ++j) {
    const double* p = theta.data() + j * lay.per_atom();
    auto& a = g.atoms[j];
    a.beta0 = p[0];
    a.beta1.assign(p + 1, p + 1 + lay.dim);
    a.eta.assign(p + 1 + lay.dim, p + 2 + 2 * lay.dim);
  }
  return g;
}

GateKind gate_of(std::span<const double> theta, const GateKind& base, const Layout& lay) {
  GateKind g = base;
  if (lay.with_gate) {
    g.alpha = theta[lay.gate_offset()];
    g.tau = theta[lay.gate_offset() + 1];
  }
  return g;
}

void project(Vec& theta, const ParameterBox& box, const Layout& lay) {
  for (std::size_t j = 0; j < lay.atoms; ++j) {
    double* p = theta.data() + j * lay.per_atom();
    p[0] = std::clamp(p[0], box.beta0_lo, box.beta0_hi);
    for (std::size_t k = 0; k < lay.dim; ++k) p[1 + k] = std::clamp(p[1 + k], box.beta1_lo, box.beta1_hi);
    for (std::size_t k = 0; k <= lay.dim; ++k)
      p[1 + lay.dim + k] = std::clamp(p[1 + lay.dim + k], box.eta_lo, box.eta_hi);
  }
  if (lay.with_gate) {
    for (std::size_t k = 0; k < 2; ++k)
      theta[lay.gate_offset() + k] = std::clamp(theta[lay.gate_offset() + k], -kGateBound, kGateBound);
  }
}

// Evaluates g at x for packed parameters. When `row` is non-empty it receives
// ∂g/∂θ. Scratch buffers are reused across calls.
struct Evaluator {
  const RegressionModel& model;
  Layout lay;
  Vec scores, h, u, grad_eta;

  Evaluator(const RegressionModel& m, Layout l) : model(m), lay(l) {
    const std::size_t total = m.bank.size() + l.atoms;
    scores.resize(total);
    h.resize(total);
    u.resize(l.atoms);
    grad_eta.resize(l.dim + 1);
  }

  double operator()(std::span<const double> x, std::span<const double> theta, const GateKind& gate,
                    std::span<double> row) {
    const auto& bank = model.bank;
    const std::size_t n0 = bank.size();
    const std::size_t d = lay.dim;
    for (std::size_t j = 0; j < n0; ++j) {
      const Matrix& b = bank.b[j];
      double q = bank.c[j];
      for (std::size_t r = 0; r < d; ++r) {
        double bx = 0.0;
        for (std::size_t c = 0; c < d; ++c) bx += b(r, c) * x[c];
        q += x[r] * bx;
      }
      scores[j] = q;
      h[j] = model.expert.value(x, bank.eta0[j]);
    }
    for (std::size_t j = 0; j < lay.atoms; ++j) {
      const double* p = theta.data() + j * lay.per_atom();
      double uj = 0.0;
      for (std::size_t k = 0; k < d; ++k) uj += p[1 + k] * x[k];
      u[j] = uj;
      scores[n0 + j] = gate.score(uj) + p[0];
      h[n0 + j] = model.expert.value(x, std::span<const double>(p + 1 + d, d + 1));
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    double g = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      scores[k] /= z;  // now mixture weights
      g += scores[k] * h[k];
    }
    if (row.empty()) return g;

    double d_alpha = 0.0;
    double d_tau = 0.0;
    for (std::size_t j = 0; j < lay.atoms; ++j) {
      const double* p = theta.data() + j * lay.per_atom();
      double* out = row.data() + j * lay.per_atom();
      const double w = scores[n0 + j];
      const double dz = w * (h[n0 + j] - g);
      out[0] = dz;
      const double slope = gate.score_slope(u[j]);
      for (std::size_t k = 0; k < d; ++k) out[1 + k] = dz * slope * x[k];
      model.expert.gradient(x, std::span<const double>(p + 1 + d, d + 1), grad_eta);
      for (std::size_t k = 0; k <= d; ++k) out[1 + d + k] = w * grad_eta[k];
      if (lay.with_gate && gate.kind == GateKind::Kind::Norga) {
        d_alpha += dz * activate(gate.activation, gate.tau * u[j]);
        d_tau += dz * gate.alpha * activate_d1(gate.activation, gate.tau * u[j]) * u[j];
      }
    }
    if (lay.with_gate) {
      row[lay.gate_offset()] = d_alpha;
      row[lay.gate_offset() + 1] = d_tau;
    }
    return g;
  }
};

double objective(std::span<const RegressionSample> data, Evaluator& ev, std::span<const double> theta,
                 const GateKind& base) {
  const GateKind gate = gate_of(theta, base, ev.lay);
  double f = 0.0;
  for (const auto& s : data) {
    const double r = s.y - ev(s.x, theta, gate, {});
    f += r * r;
  }
  return f;
}

struct RunResult {
  Vec theta;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

RunResult run_lm(std::span<const RegressionSample> data, Evaluator& ev, Vec theta,
                 const RegressionModel& model, const FitConfig& cfg) {
  const Layout& lay = ev.lay;
  const std::size_t P = lay.size();
  project(theta, model.box, lay);
  RunResult res;
  double f = objective(data, ev, theta, model.gate);
  if (!std::isfinite(f)) throw FitError("least_squares_fit: non-finite objective at start", 0);
  res.trace.push_back(f);
  double lambda = 1e-3;
  Eigen::MatrixXd a(P, P);
  Eigen::VectorXd grad(P);
  Vec row(P);
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    if (f == 0.0) {
      res.converged = true;
      break;
    }
    a.setZero();
    grad.setZero();
    const GateKind gate = gate_of(theta, model.gate, lay);
    for (const auto& s : data) {
      const double r = s.y - ev(s.x, theta, gate, row);
      for (std::size_t p = 0; p < P; ++p) {
        grad(static_cast<Eigen::Index>(p)) += row[p] * r;
        for (std::size_t q = 0; q <= p; ++q)
          a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) += row[p] * row[q];
      }
    }
    a = a.selfadjointView<Eigen::Lower>();
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Eigen::MatrixXd m = a;
      for (std::size_t p = 0; p < P; ++p) {
        const auto ip = static_cast<Eigen::Index>(p);
        m(ip, ip) += lambda * std::max(a(ip, ip), 1e-12);
      }
      const Eigen::VectorXd delta = m.ldlt().solve(grad);
      Vec cand(theta);
      for (std::size_t p = 0; p < P; ++p) cand[p] += delta(static_cast<Eigen::Index>(p));
      project(cand, model.box, lay);
      const double fc = objective(data, ev, cand, model.gate);
      if (std::isfinite(fc) && fc < f) {
        const double rel = (f - fc) / f;
        theta = std::move(cand);
        f = fc;
        res.trace.push_back(f);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < cfg.tolerance) res.converged = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      res.converged = true;
      break;
    }
    if (res.converged) break;
  }
  res.theta = std::move(theta);
  res.f = f;
  res.iterations = it;
  return res;
}

RunResult run_adam(std::span<const RegressionSample> data, Evaluator& ev, Vec theta,
                   const RegressionModel& model, const FitConfig& cfg) {
  const Layout& lay = ev.lay;
  const std::size_t P = lay.size();
  project(theta, model.box, lay);
  RunResult res;
  Vec m(P, 0.0), v(P, 0.0), grad(P), row(P);
  double lr = cfg.learning_rate;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double f_prev = std::numeric_limits<double>::infinity();
  Vec theta_prev = theta;
  Vec grad_prev(P, 0.0);
  long t = 0;
  int step = 0;
  for (; step < cfg.max_iterations; ++step) {
    const GateKind gate = gate_of(theta, model.gate, lay);
    double f = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& s : data) {
      const double r = s.y - ev(s.x, theta, gate, row);
      f += r * r;
      for (std::size_t p = 0; p < P; ++p) grad[p] -= 2.0 * r * row[p];
    }
    if (!std::isfinite(f)) throw FitError("least_squares_fit: non-finite objective", step);
    if (cfg.monotone && f > f_prev) {
      theta = theta_prev;
      grad = grad_prev;
      f = f_prev;
      lr *= 0.5;
      if (lr < 1e-12) {
        res.converged = true;
        break;
      }
    } else {
      if (std::isfinite(f_prev) && (f_prev - f) <= cfg.tolerance * f_prev && f <= f_prev) {
        res.trace.push_back(f);
        f_prev = f;
        theta_prev = theta;
        res.converged = true;
        break;
      }
      res.trace.push_back(f);
      f_prev = f;
      theta_prev = theta;
      grad_prev = grad;
    }
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t p = 0; p < P; ++p) {
      m[p] = b1 * m[p] + (1.0 - b1) * grad[p];
      v[p] = b2 * v[p] + (1.0 - b2) * grad[p] * grad[p];
      theta[p] -= lr * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
    }
    project(theta, model.box, lay);
  }
  res.theta = theta_prev;
  res.f = f_prev;
  res.iterations = step;
  return res;
}

Vec random_start(Rng& rng, const ParameterBox& box, const GateKind& gate, const Layout& lay) {
  Vec theta(lay.size());
  for (std::size_t j = 0; j < lay.atoms; ++j) {
    double* p = theta.data() + j * lay.per_atom();
    p[0] = rng.uniform(box.beta0_lo, box.beta0_hi);
    for (std::size_t k = 0; k < lay.dim; ++k) p[1 + k] = rng.uniform(box.beta1_lo, box.beta1_hi);
    for (std::size_t k = 0; k <= lay.dim; ++k) p[1 + lay.dim + k] = rng.uniform(box.eta_lo, box.eta_hi);
  }
  if (lay.with_gate) {
    theta[lay.gate_offset()] = gate.alpha;
    theta[lay.gate_offset() + 1] = gate.tau;
  }
  return theta;
}

}  // namespace

double least_squares_objective(std::span<const RegressionSample> data, const RegressionModel& model,
                               const MixingMeasure& g) {
  double f = 0.0;
  for (const auto& s : data) {
    const double r = s.y - regression_fn_unchecked(s.x, model, g);
    f += r * r;
  }
  return f;
}

Vec regression_jacobian(std::span<const double> x, const RegressionModel& model,
                        const MixingMeasure& g, bool with_gate) {
  const Layout lay{x.size(), g.size(), with_gate};
  Evaluator ev(model, lay);
  const Vec theta = pack(g, model.gate, lay);
  Vec row(lay.size());
  ev(x, theta, model.gate, row);
  return row;
}

FitResult least_squares_fit(std::span<const RegressionSample> data, const RegressionModel& model,
                            std::size_t num_atoms, const FitConfig& config) {
  if (num_atoms == 0) throw ConfigError("least_squares_fit: need at least one fitted atom");
  if (data.empty()) throw ConfigError("least_squares_fit: empty dataset");
  if (config.restarts < 0 || config.max_iterations < 0) {
    throw ConfigError("least_squares_fit: restarts and iterations must be non-negative");
  }
  model.bank.validate();
  const Layout lay{data.front().x.size(), num_atoms,
                   config.learn_gate && model.gate.kind == GateKind::Kind::Norga};
  Evaluator ev(model, lay);

  std::vector<Vec> starts;
  for (const auto& g0 : config.initial) {
    if (g0.size() != num_atoms) throw ConfigError("least_squares_fit: initial measure has wrong atom count");
    starts.push_back(pack(g0, model.gate, lay));
  }
  Rng rng(config.seed);
  for (int r = 0; r < config.restarts; ++r) starts.push_back(random_start(rng, model.box, model.gate, lay));
  if (starts.empty()) throw ConfigError("least_squares_fit: no starting points");

  RunResult best;
  for (auto& s : starts) {
    RunResult r = config.optimizer == Optimizer::LevenbergMarquardt
                      ? run_lm(data, ev, std::move(s), model, config)
                      : run_adam(data, ev, std::move(s), model, config);
    if (r.f < best.f) best = std::move(r);
  }

  FitResult out;
  out.measure = unpack(best.theta, lay);
  out.objective = best.f;
  out.converged = best.converged;
  out.iterations = best.iterations;
  const GateKind g = gate_of(best.theta, model.gate, lay);
  out.alpha = g.alpha;
  out.tau = g.tau;
  out.trace = std::move(best.trace);
  return out;
}

}  // namespace pmoe::estimation
