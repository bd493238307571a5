#include "pmoe/estimation/model.hpp"

#include <algorithm>
#include <cmath>

#include "pmoe/error.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::estimation {

double Atom::weight() const { return std::exp(beta0); }

Vec Atom::location() const {
  Vec w(beta1);
  w.insert(w.end(), eta.begin(), eta.end());
  return w;
}

std::size_t MixingMeasure::input_dim() const { return atoms.empty() ? 0 : atoms.front().beta1.size(); }
std::size_t MixingMeasure::expert_dim() const { return atoms.empty() ? 0 : atoms.front().eta.size(); }

namespace {
bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }
}  // namespace

bool ParameterBox::contains(const Atom& a) const {
  if (!within(a.beta0, beta0_lo, beta0_hi)) return false;
  for (double v : a.beta1)
    if (!within(v, beta1_lo, beta1_hi)) return false;
  for (double v : a.eta)
    if (!within(v, eta_lo, eta_hi)) return false;
  return true;
}

bool ParameterBox::contains(const MixingMeasure& g) const {
  return std::all_of(g.atoms.begin(), g.atoms.end(), [this](const Atom& a) { return contains(a); });
}

void ParameterBox::project(Atom& a) const {
  a.beta0 = std::clamp(a.beta0, beta0_lo, beta0_hi);
  for (double& v : a.beta1) v = std::clamp(v, beta1_lo, beta1_hi);
  for (double& v : a.eta) v = std::clamp(v, eta_lo, eta_hi);
}

std::string to_string(ExpertKind k) {
  switch (k) {
    case ExpertKind::Identity: return "identity";
    case ExpertKind::Relu: return "relu";
    case ExpertKind::Gelu: return "gelu";
    case ExpertKind::Constant: return "constant";
  }
  return "?";
}

ExpertKind parse_expert(const std::string& name) {
  if (name == "identity" || name == "linear") return ExpertKind::Identity;
  if (name == "relu") return ExpertKind::Relu;
  if (name == "gelu") return ExpertKind::Gelu;
  if (name == "constant") return ExpertKind::Constant;
  throw ConfigError("unknown expert '" + name + "' (expected identity|relu|gelu|constant)");
}

namespace {
double affine(std::span<const double> x, std::span<const double> eta) {
  double z = eta[x.size()];
  for (std::size_t k = 0; k < x.size(); ++k) z += eta[k] * x[k];
  return z;
}

double phi(ExpertKind k, double z) {
  switch (k) {
    case ExpertKind::Identity: return z;
    case ExpertKind::Relu: return z > 0.0 ? z : 0.0;
    case ExpertKind::Gelu: return activate(Activation::Gelu, z);
    case ExpertKind::Constant: return 0.0;
  }
  return 0.0;
}

double phi_d1(ExpertKind k, double z) {
  switch (k) {
    case ExpertKind::Identity: return 1.0;
    case ExpertKind::Relu: return z > 0.0 ? 1.0 : 0.0;
    case ExpertKind::Gelu: return activate_d1(Activation::Gelu, z);
    case ExpertKind::Constant: return 0.0;
  }
  return 0.0;
}

double phi_d2(ExpertKind k, double z) {
  return k == ExpertKind::Gelu ? activate_d2(Activation::Gelu, z) : 0.0;
}
}  // namespace

double ExpertFn::value(std::span<const double> x, std::span<const double> eta) const {
  if (kind == ExpertKind::Constant) return eta[x.size()];
  return phi(kind, affine(x, eta));
}

void ExpertFn::gradient(std::span<const double> x, std::span<const double> eta,
                        std::span<double> out) const {
  const std::size_t d = x.size();
  if (kind == ExpertKind::Constant) {
    std::fill(out.begin(), out.end(), 0.0);
    out[d] = 1.0;
    return;
  }
  const double s = phi_d1(kind, affine(x, eta));
  for (std::size_t k = 0; k < d; ++k) out[k] = s * x[k];
  out[d] = s;
}

double ExpertFn::hessian(std::span<const double> x, std::span<const double> eta, std::size_t k,
                         std::size_t l) const {
  if (kind == ExpertKind::Constant) return 0.0;
  const std::size_t d = x.size();
  const double xk = k < d ? x[k] : 1.0;
  const double xl = l < d ? x[l] : 1.0;
  return phi_d2(kind, affine(x, eta)) * xk * xl;
}

double GateKind::score(double u) const {
  if (kind == Kind::Linear) return u;
  return u + alpha * activate(activation, tau * u);
}

double GateKind::score_slope(double u) const {
  if (kind == Kind::Linear) return 1.0;
  return 1.0 + alpha * tau * activate_d1(activation, tau * u);
}

std::string GateKind::name() const {
  if (kind == Kind::Linear) return "linear";
  return "norga-" + std::string(to_string(activation));
}

void PretrainedGateBank::validate() const {
  if (c.size() != b.size() || eta0.size() != b.size()) {
    throw ConfigError("pretrained bank: B, c and eta0 must have the same count");
  }
  const std::size_t d = input_dim();
  for (const auto& m : b)
    if (m.rows() != d || m.cols() != d) throw DimensionError("pretrained bank: B must be Nd x Nd");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double quadratic(std::span<const double> x, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.rows(); ++i) {
    double bx = 0.0;
    for (std::size_t j = 0; j < b.cols(); ++j) bx += b(i, j) * x[j];
    s += x[i] * bx;
  }
  return s;
}

void check_dims(std::span<const double> x, const RegressionModel& model, const MixingMeasure& g) {
  if (model.bank.size() > 0 && model.bank.input_dim() != x.size()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " coordinates, bank expects " +
                         std::to_string(model.bank.input_dim()));
  }
  for (const auto& a : g.atoms) {
    if (a.beta1.size() != x.size() || a.eta.size() != x.size() + 1) {
      throw DimensionError("atom dimensions do not match input dimension " +
                           std::to_string(x.size()));
    }
  }
}

}  // namespace

Vec mixture_weights(std::span<const double> x, const RegressionModel& model,
                    const MixingMeasure& g) {
  check_dims(x, model, g);
  const auto& bank = model.bank;
  Vec s;
  s.reserve(bank.size() + g.size());
  for (std::size_t j = 0; j < bank.size(); ++j) s.push_back(quadratic(x, bank.b[j]) + bank.c[j]);
  for (const auto& a : g.atoms) s.push_back(model.gate.score(dot(a.beta1, x)) + a.beta0);
  if (s.empty()) throw ContractError("mixture has no components");
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double& v : s) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : s) v /= z;
  return s;
}

double regression_fn_unchecked(std::span<const double> x, const RegressionModel& model,
                               const MixingMeasure& g) {
  const Vec w = mixture_weights(x, model, g);
  const auto& bank = model.bank;
  double out = 0.0;
  for (std::size_t j = 0; j < bank.size(); ++j) out += w[j] * model.expert.value(x, bank.eta0[j]);
  for (std::size_t j = 0; j < g.size(); ++j)
    out += w[bank.size() + j] * model.expert.value(x, g.atoms[j].eta);
  return out;
}

double regression_fn(std::span<const double> x, const RegressionModel& model,
                     const MixingMeasure& g) {
  if (!model.box.contains(g)) throw DomainError("mixing measure has an atom outside the parameter box");
  return regression_fn_unchecked(x, model, g);
}

Matrix sample_inputs(const InputDistribution& mu, std::size_t dim, std::size_t count,
                     std::uint64_t seed) {
  Rng rng(seed);
  return uniform_matrix(rng, count, dim, mu.lo, mu.hi);
}

std::vector<RegressionSample> generate_dataset(const RegressionModel& model,
                                               const MixingMeasure& g_star, std::size_t n,
                                               double nu, const InputDistribution& mu,
                                               std::uint64_t seed) {
  if (n == 0) throw ConfigError("generate_dataset: n must be at least 1");
  if (!(nu >= 0.0)) throw ConfigError("generate_dataset: noise level must be non-negative");
  model.bank.validate();
  if (!model.box.contains(g_star)) throw DomainError("true mixing measure lies outside the parameter box");
  const std::size_t dim = model.bank.input_dim();
  Rng rng(seed);
  Rng noise = rng.split();
  std::vector<RegressionSample> out(n);
  for (auto& s : out) {
    s.x.resize(dim);
    for (double& v : s.x) v = rng.uniform(mu.lo, mu.hi);
    s.y = regression_fn_unchecked(s.x, model, g_star);
    if (nu > 0.0) s.y += nu * noise.normal();
  }
  return out;
}

double l2_distance(const RegressionModel& model, const MixingMeasure& g, const MixingMeasure& h,
                   const Matrix& points) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto x = points.row(i);
    const double d = regression_fn_unchecked(x, model, g) - regression_fn_unchecked(x, model, h);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(points.rows()));
}

Problem default_problem(GateKind gate, ExpertKind expert) {
  Problem p;
  auto& bank = p.model.bank;
  bank.b = {Matrix{{-0.8, -1.5}, {-1.5, -1.2}}, Matrix{{-0.8, 1.1}, {1.1, -0.6}}};
  bank.c = {0.8, -1.0};
  bank.eta0 = {{-1.3, -1.6, 1.8}, {1.6, 1.8, -1.6}};
  p.model.gate = gate;
  p.model.expert = ExpertFn{expert};
  p.g_star.atoms = {
      Atom{1.1, {1.8, -0.1}, {1.7, 1.8, -0.9}},
      Atom{0.3, {-1.1, 1.7}, {-1.7, -1.6, -1.2}},
  };
  return p;
}

}  // namespace pmoe::estimation
