#include "pmoe/estimation/rates.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <thread>

#include "pmoe/error.hpp"
#include "pmoe/estimation/voronoi.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::estimation {

Quartiles quartiles(std::vector<double> v) {
  if (v.empty()) throw ContractError("quartiles: empty sample");
  std::sort(v.begin(), v.end());
  auto at = [&v](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("loglog_slope: need two or more paired points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("loglog_slope: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw DomainError("loglog_slope: x values are all equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = ly[i] - f.intercept - f.slope * lx[i];
      sse += e * e;
    }
    const double df = static_cast<double>(n - 2);
    const double se = std::sqrt(sse / df / sxx);
    const boost::math::students_t dist(df);
    f.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
  }
  return f;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t n, int trial) {
  std::uint64_t h = splitmix64_mix(seed ^ 0x5EEDULL);
  h = splitmix64_mix(h + static_cast<std::uint64_t>(n));
  return splitmix64_mix(h + static_cast<std::uint64_t>(trial));
}

TrialRecord run_trial(const Problem& problem, const RateConfig& config, const Matrix& mc_points,
                      std::size_t n, int trial) {
  TrialRecord rec;
  rec.gate = problem.model.gate.name();
  rec.n = n;
  rec.trial = trial;
  const std::uint64_t seed = trial_seed(config.seed, n, trial);
  const auto data = generate_dataset(problem.model, problem.g_star, n, config.nu, problem.mu, seed);
  FitConfig fc = config.fit;
  fc.seed = splitmix64_mix(seed + 1);
  const std::size_t atoms = config.fitted_atoms == 0 ? problem.g_star.size() : config.fitted_atoms;
  try {
    const FitResult fit = least_squares_fit(data, problem.model, atoms, fc);
    rec.loss_l1 = voronoi_loss_l1(fit.measure, problem.g_star);
    rec.loss_l2r = voronoi_loss_l2r(fit.measure, problem.g_star, config.r);
    rec.l2mu_error = l2_distance(problem.model, fit.measure, problem.g_star, mc_points);
    rec.objective = fit.objective;
    rec.converged = fit.converged;
  } catch (const FitError& e) {
    rec.failed = true;
    rec.error = std::string(e.what()) + " (step " + std::to_string(e.step()) + ")";
  }
  return rec;
}

RateResult rate_experiment(const Problem& problem, const RateConfig& config) {
  if (config.ns.empty()) throw ConfigError("rate_experiment: empty n-grid");
  if (config.trials < 1) throw ConfigError("rate_experiment: trials must be at least 1");
  if (config.mc_points == 0) throw ConfigError("rate_experiment: mc_points must be at least 1");
  const Matrix mc = sample_inputs(problem.mu, problem.model.bank.input_dim(), config.mc_points,
                                  splitmix64_mix(config.seed ^ 0x3C3CULL));

  struct Job {
    std::size_t n;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t n : config.ns)
    for (int t = 0; t < config.trials; ++t) jobs.push_back({n, t});
  // Largest n first so the slowest trials do not trail at the end.
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.n > b.n; });

  std::vector<TrialRecord> records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++)
      records[k] = run_trial(problem, config, mc, jobs[k].n, jobs[k].trial);
  };
  const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return a.n != b.n ? a.n < b.n : a.trial < b.trial;
  });

  RateResult res;
  res.gate = problem.model.gate.name();
  res.fitted_atoms = config.fitted_atoms == 0 ? problem.g_star.size() : config.fitted_atoms;
  std::vector<double> xs, m1, m2, mmu;
  for (std::size_t n : config.ns) {
    RateRow row;
    row.n = n;
    std::vector<double> l1, l2r, l2mu;
    for (const auto& r : records) {
      if (r.n != n) continue;
      if (r.failed) {
        ++row.failures;
        continue;
      }
      l1.push_back(r.loss_l1);
      l2r.push_back(r.loss_l2r);
      l2mu.push_back(r.l2mu_error);
    }
    if (4 * row.failures > config.trials) {
      throw ExperimentError("rate_experiment: " + std::to_string(row.failures) + " of " +
                            std::to_string(config.trials) + " fits failed at n = " + std::to_string(n));
    }
    row.l1 = quartiles(l1);
    row.l2r = quartiles(l2r);
    row.l2mu = quartiles(l2mu);
    res.rows.push_back(row);
    xs.push_back(static_cast<double>(n));
    m1.push_back(row.l1.median);
    m2.push_back(row.l2r.median);
    mmu.push_back(row.l2mu.median);
  }
  res.records = std::move(records);
  if (xs.size() >= 2) {
    res.slope_l1 = loglog_slope(xs, m1);
    res.slope_l2r = loglog_slope(xs, m2);
    res.slope_l2mu = loglog_slope(xs, mmu);
  }
  return res;
}

void write_rate_csv(std::ostream& os, const std::vector<RateResult>& results) {
  os << "gate,n,trial,loss_l1,loss_l2r,l2mu_error,objective,converged\n";
  const auto old = os.precision(17);
  for (const auto& res : results) {
    for (const auto& r : res.records) {
      if (r.failed) continue;
      os << r.gate << ',' << r.n << ',' << r.trial << ',' << r.loss_l1 << ',' << r.loss_l2r << ','
         << r.l2mu_error << ',' << r.objective << ',' << (r.converged ? 1 : 0) << '\n';
    }
  }
  os.precision(old);
}

}  // namespace pmoe::estimation
