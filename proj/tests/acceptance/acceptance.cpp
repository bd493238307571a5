// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any selected
// criterion fails. Select a subset with e.g. `--only 1,2,8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pmoe/estimation/degenerate.hpp"
#include "pmoe/estimation/rates.hpp"
#include "pmoe/hide/metrics.hpp"
#include "pmoe/hide/runner.hpp"
#include "pmoe/verify.hpp"

using namespace pmoe;

namespace {

// Pinned tolerances and bands.
constexpr double kEquivTol = 1e-10;
constexpr double kReductionTol = 1e-12;
constexpr double kGradTol = 1e-5;
constexpr std::size_t kEquivInstances = 200;
constexpr std::size_t kGradInstances = 50;
constexpr double kSlopeLo = -0.65, kSlopeHi = -0.35;
constexpr double kLinearSlopeMax = -0.2;
constexpr double kContrastMin = 0.2;
constexpr double kDegenerateRatio = 0.5;
constexpr double kClosedFormTol = 1e-12;
constexpr std::size_t kDegenerateMc = 100000;
constexpr int kRateTrials = 20;
constexpr std::size_t kClSeedsOracle = 3;
constexpr std::size_t kClSeedsDirectional = 5;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string fixed(double v, int prec = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int failures = 0;

void report(int id, bool ok, const std::string& what, double seconds, double limit) {
  const bool in_time = seconds <= limit;
  const bool pass = ok && in_time;
  if (!pass) ++failures;
  std::cout << "C" << id << (id < 10 ? "  " : " ") << (pass ? "PASS" : "FAIL") << "  " << what << "  [" << fixed(seconds, 1)
            << " s, limit " << fixed(limit, 0) << " s" << (in_time ? "" : ", OVER TIME") << "]" << std::endl;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Rates {
  estimation::RateResult norga, linear;
  double norga_seconds = 0.0, linear_seconds = 0.0;
  bool norga_ok = false, linear_ok = false;
  std::string error;
};

Rates run_rates(bool need_norga, bool need_linear) {
  Rates r;
  estimation::RateConfig cfg;
  cfg.trials = kRateTrials;
  if (need_norga) {
    const auto t0 = Clock::now();
    const auto p = estimation::default_problem(estimation::GateKind::norga(Activation::Tanh));
    try {
      r.norga = estimation::rate_experiment(p, cfg);
      r.norga_ok = true;
    } catch (const std::exception& e) {
      r.error += std::string("norga: ") + e.what() + " ";
    }
    r.norga_seconds = since(t0);
  }
  if (need_linear) {
    const auto t0 = Clock::now();
    const auto p = estimation::default_problem(estimation::GateKind::linear());
    estimation::RateConfig over = cfg;
    over.fitted_atoms = p.g_star.size() + 1;
    try {
      r.linear = estimation::rate_experiment(p, over);
      r.linear_ok = true;
    } catch (const std::exception& e) {
      r.error += std::string("linear: ") + e.what() + " ";
    }
    r.linear_seconds = since(t0);
  }
  return r;
}

std::string slope_text(const estimation::SlopeFit& s) { return fixed(s.slope) + " +/- " + fixed(s.half_width); }

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          only.insert(std::stoi(item));
        } catch (const std::exception&) {
          std::cerr << "bad criterion id '" << item << "'\n";
          return 2;
        }
      }
    } else {
      std::cerr << "usage: pmoe_acceptance [--only 1,2,...]\n";
      return 2;
    }
  }
  auto want = [&](int id) { return only.empty() || only.count(id) != 0; };

  // 1-4: exact equivalences and gradients.
  if (want(1)) {
    const auto t0 = Clock::now();
    const auto r = check_attention_moe(kEquivInstances, 1);
    report(1, r.passed && r.max_deviation < kEquivTol && r.instances >= kEquivInstances,
           "attention/MoE equivalence: max dev " + sci(r.max_deviation) + " < " + sci(kEquivTol) + " over " +
               std::to_string(r.instances) + " instances",
           since(t0), 10);
  }
  if (want(2)) {
    const auto t0 = Clock::now();
    const auto r = check_prefix_moe(kEquivInstances, 2);
    report(2, r.passed && r.max_deviation < kEquivTol && r.instances >= kEquivInstances,
           "prefix/prefix-MoE equivalence: max dev " + sci(r.max_deviation) + " < " + sci(kEquivTol) + " over " +
               std::to_string(r.instances) + " instances",
           since(t0), 10);
  }
  if (want(3)) {
    const auto t0 = Clock::now();
    const auto red = check_norga_reduction(kEquivInstances, 3);
    const auto blk = check_pretrain_block(kEquivInstances, 3);
    report(3, red.passed && red.max_deviation < kReductionTol && blk.passed && blk.max_deviation == 0.0,
           "alpha = 0 reduction: max dev " + sci(red.max_deviation) + " < " + sci(kReductionTol) +
               "; pretrain block max dev " + sci(blk.max_deviation) + " (must be exactly 0)",
           since(t0), 5);
  }
  if (want(4)) {
    const auto t0 = Clock::now();
    const auto r = check_norga_gradients(kGradInstances, 4);
    report(4, r.passed && r.max_deviation < kGradTol && r.instances >= kGradInstances,
           "gradients wrt p_K, p_V, alpha, tau vs central differences: max rel err " + sci(r.max_deviation) + " < " +
               sci(kGradTol) + " over " + std::to_string(r.instances) + " instances",
           since(t0), 30);
  }

  // 5-7 share the rate runs.
  if (want(5) || want(6) || want(7)) {
    const Rates rates = run_rates(want(5) || want(6) || want(7), want(7));
    if (!rates.error.empty()) std::cout << "rate experiment error: " << rates.error << std::endl;
    const auto& nr = rates.norga;
    if (rates.norga_ok) {
      std::cout << "   norga-tanh exact:      slope_l1 " << slope_text(nr.slope_l1) << ", slope_l2mu "
                << slope_text(nr.slope_l2mu) << ", slope_l2r " << slope_text(nr.slope_l2r) << std::endl;
    }
    if (rates.linear_ok) {
      const auto& lr = rates.linear;
      std::cout << "   linear over-specified: slope_l1 " << slope_text(lr.slope_l1) << ", slope_l2mu "
                << slope_text(lr.slope_l2mu) << ", slope_l2r " << slope_text(lr.slope_l2r) << std::endl;
    }
    if (want(5)) {
      const double s = nr.slope_l2mu.slope;
      report(5, rates.norga_ok && s >= kSlopeLo && s <= kSlopeHi,
             "NoRGa L2(mu) regression error slope " + fixed(s) + " in [" + fixed(kSlopeLo, 2) + ", " +
                 fixed(kSlopeHi, 2) + "]",
             rates.norga_seconds, 900);
    }
    if (want(6)) {
      const double s = nr.slope_l1.slope;
      report(6, rates.norga_ok && s >= kSlopeLo && s <= kSlopeHi,
             "NoRGa exact-fit L1 median slope " + fixed(s) + " in [" + fixed(kSlopeLo, 2) + ", " +
                 fixed(kSlopeHi, 2) + "]",
             rates.norga_seconds, 900);
    }
    if (want(7)) {
      const double s = rates.linear.slope_l2r.slope;
      const double contrast = rates.linear.slope_l1.slope - nr.slope_l1.slope;
      const bool flat = s > kLinearSlopeMax;
      const bool steeper = contrast >= kContrastMin;
      report(7, rates.norga_ok && rates.linear_ok && flat && steeper,
             "linear over-specified L2,1 slope " + fixed(s) + (flat ? " > " : " NOT > ") + fixed(kLinearSlopeMax, 2) +
                 "; NoRGa L1 slope steeper by " + fixed(contrast) + (steeper ? " >= " : " < ") + fixed(kContrastMin, 2),
             rates.linear_seconds, 900);
    }
  }

  // 8: degenerate sequence.
  if (want(8)) {
    const auto t0 = Clock::now();
    const auto p = estimation::default_problem(estimation::GateKind::linear());
    const std::vector<double> ns{4, 8, 16, 32, 64, 128, 256};
    const auto curve = estimation::degenerate_curve(p, ns, 1.0, kDegenerateMc, 8);
    double err = 0.0;
    for (const auto& pt : curve) err = std::max(err, std::abs(pt.loss - pt.closed_form));
    const double first = curve.front().ratio, last = curve.back().ratio;
    report(8, last < kDegenerateRatio * first && err <= kClosedFormTol,
           "ratio at n=256 / ratio at n=4 = " + fixed(last / first, 4) + " < " + fixed(kDegenerateRatio, 2) +
               "; closed-form max err " + sci(err) + " <= " + sci(kClosedFormTol),
           since(t0), 120);
  }

  // 9: harness correctness.
  if (want(9)) {
    const auto t0 = Clock::now();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto m = hide::cl_metrics(Matrix{{90, 80}, {nan, 85}});
    const bool exact = m.fa == 82.5 && m.ca == 86.25 && m.fm == 10.0;
    bool isolation = true, oracle = true;
    std::string detail;
    for (std::size_t s = 0; s < kClSeedsOracle; ++s) {
      hide::RunConfig cfg;
      cfg.seed = s;
      const auto r = hide::run_stream(cfg);
      isolation = isolation && r.isolation_ok && r.prompts_frozen_ok;
      bool every_task = true;
      for (std::size_t t = 0; t < r.s.cols(); ++t)
        for (std::size_t i = 0; i <= t; ++i) every_task = every_task && r.s_oracle(i, t) >= r.s(i, t);
      oracle = oracle && r.oracle_metrics.fa >= r.metrics.fa;
      detail += " seed " + std::to_string(s) + ": oracle FA " + fixed(r.oracle_metrics.fa, 2) + " vs " +
                fixed(r.metrics.fa, 2) + (every_task ? "" : " (not per-entry)") + ";";
    }
    report(9, exact && isolation && oracle,
           std::string("metrics (82.5, 86.25, 10) ") + (exact ? "exact" : "WRONG") + "; isolation " +
               (isolation ? "held" : "VIOLATED") + ";" + detail,
           since(t0), 300);
  }

  // 10: directional benefit and activation ablation.
  if (want(10)) {
    const auto t0 = Clock::now();
    std::vector<double> fa_norga, fa_linear;
    for (std::size_t s = 0; s < kClSeedsDirectional; ++s) {
      hide::RunConfig cfg;
      cfg.seed = s;
      fa_norga.push_back(hide::run_stream(cfg).metrics.fa);
      cfg.hide.gate = hide::PromptGate::Linear;
      fa_linear.push_back(hide::run_stream(cfg).metrics.fa);
    }
    bool valid = true;
    std::string acts;
    for (Activation a : {Activation::Sigmoid, Activation::Gelu}) {
      hide::RunConfig cfg;
      cfg.hide.activation = a;
      const auto r = hide::run_stream(cfg);
      const auto& m = r.metrics;
      const bool ok = std::isfinite(m.fa) && std::isfinite(m.ca) && std::isfinite(m.fm) && m.fa >= 0 && m.fa <= 100 &&
                      r.isolation_ok;
      valid = valid && ok;
      acts += std::string(" ") + std::string(to_string(a)) + " FA " + fixed(m.fa, 2) + (ok ? "" : " INVALID");
    }
    const double mn = median(fa_norga), ml = median(fa_linear);
    report(10, mn >= ml && valid,
           "median FA over " + std::to_string(kClSeedsDirectional) + " seeds: NoRGa-tanh " + fixed(mn, 2) +
               (mn >= ml ? " >= " : " < ") + "linear " + fixed(ml, 2) + ";" + acts,
           since(t0), 600);
  }

  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
