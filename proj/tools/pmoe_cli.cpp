#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_config.hpp"
#include "pmoe/error.hpp"
#include "pmoe/estimation/degenerate.hpp"
#include "pmoe/estimation/rates.hpp"
#include "pmoe/hide/runner.hpp"
#include "pmoe/verify.hpp"

namespace fs = std::filesystem;
using namespace pmoe;
using cli::Json;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

template <class T>
void set_if(Json& cfg, const CLI::Option* opt, const char* pointer, const T& value) {
  if (opt->count() > 0) cfg[Json::json_pointer(pointer)] = value;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void write_manifest(const fs::path& out, const std::string& command, const Json& cfg, Json extra,
                    const std::vector<std::string>& argv) {
  fs::create_directories(out);
  cli::write_json(out / "resolved_config.json", cfg);
  Json m = std::move(extra);
  m["command"] = command;
  m["seed"] = cfg["seed"];
  m["config_hash"] = cli::hex(cli::config_hash(cfg));
  m["argv"] = argv;
  m["replay"] = "pmoe " + command + " --config " + (out / "resolved_config.json").string() +
                " --out " + out.string();
  cli::write_json(out / "run_manifest.json", m);
}

// ---- verify ---------------------------------------------------------------

int run_verify(const Json& cfg, const fs::path& out) {
  const VerifyConfig vc = cli::verify_from(cfg);
  const auto results = run_oracle_suite(vc);
  bool ok = true;
  Json props = Json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(38) << r.name << std::right
              << " instances " << std::setw(4) << r.instances << "  max_dev " << sci(r.max_deviation)
              << "  tol " << sci(r.tolerance);
    if (!r.passed) std::cout << "  seed " << r.worst_seed;
    std::cout << '\n';
    props.push_back({{"name", r.name},
                     {"passed", r.passed},
                     {"instances", r.instances},
                     {"max_deviation", r.max_deviation},
                     {"tolerance", r.tolerance},
                     {"worst_seed", r.worst_seed}});
  }
  cli::write_json(out / "verify.json", {{"passed", ok}, {"properties", props}});
  std::cout << (ok ? "all properties passed" : "verification FAILED") << '\n';
  return ok ? kOk : kFail;
}

// ---- rates ----------------------------------------------------------------

Json slope_json(const estimation::SlopeFit& s) {
  return {{"slope", s.slope}, {"half_width", s.half_width}, {"intercept", s.intercept}};
}

struct Check {
  std::string name;
  bool passed;
  std::string detail;
};

int run_rates(const Json& cfg, const fs::path& out) {
  const cli::RatesPlan plan = cli::rates_from(cfg);
  const cli::Bands bands = cli::bands_from(cfg);

  std::vector<estimation::RateResult> results;
  std::vector<std::size_t> extras;
  for (const auto& gate : plan.gates) {
    const bool norga = gate == "norga";
    const auto kind = norga ? estimation::GateKind::norga(plan.activation) : estimation::GateKind::linear();
    const auto problem = estimation::default_problem(kind, plan.expert);
    estimation::RateConfig rc = plan.rate;
    const std::size_t extra = norga ? plan.norga_extra_atoms : plan.linear_extra_atoms;
    rc.fitted_atoms = problem.g_star.size() + extra;
    std::cout << "gate " << kind.name() << ": fitting " << rc.fitted_atoms << " atoms (true "
              << problem.g_star.size() << "), " << rc.trials << " trials x " << rc.ns.size() << " sample sizes"
              << std::endl;
    try {
      results.push_back(estimation::rate_experiment(problem, rc));
    } catch (const ExperimentError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kFail;
    }
    extras.push_back(extra);

    const auto& res = results.back();
    std::cout << "      n    L1 median   L2r median   L2mu median  failures\n";
    for (const auto& row : res.rows) {
      std::cout << std::setw(7) << row.n << "  " << std::setw(11) << sci(row.l1.median) << "  " << std::setw(11)
                << sci(row.l2r.median) << "  " << std::setw(12) << sci(row.l2mu.median) << "  " << std::setw(8)
                << row.failures << '\n';
    }
    std::cout << "  slope_l1   " << fmt(res.slope_l1.slope) << " +/- " << fmt(res.slope_l1.half_width, 2) << '\n'
              << "  slope_l2r  " << fmt(res.slope_l2r.slope) << " +/- " << fmt(res.slope_l2r.half_width, 2) << '\n'
              << "  slope_l2mu " << fmt(res.slope_l2mu.slope) << " +/- " << fmt(res.slope_l2mu.half_width, 2)
              << '\n';
  }

  {
    std::ofstream csv(out / "rates.csv");
    estimation::write_rate_csv(csv, results);
  }

  std::vector<Check> checks;
  const estimation::RateResult* norga_exact = nullptr;
  const estimation::RateResult* linear_over = nullptr;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    if (plan.gates[k] == "norga" && extras[k] == 0) norga_exact = &r;
    if (plan.gates[k] == "linear" && extras[k] > 0) linear_over = &r;
  }
  auto within = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (norga_exact) {
    const double s1 = norga_exact->slope_l1.slope;
    const double s2 = norga_exact->slope_l2mu.slope;
    checks.push_back({"norga slope_l1 in band", within(s1, bands.slope_l1_lo, bands.slope_l1_hi),
                      fmt(s1) + " in [" + fmt(bands.slope_l1_lo) + ", " + fmt(bands.slope_l1_hi) + "]"});
    checks.push_back({"norga slope_l2mu in band", within(s2, bands.slope_l2mu_lo, bands.slope_l2mu_hi),
                      fmt(s2) + " in [" + fmt(bands.slope_l2mu_lo) + ", " + fmt(bands.slope_l2mu_hi) + "]"});
  }
  if (linear_over) {
    const double s = linear_over->slope_l2r.slope;
    checks.push_back({"linear slope_l2r above max", s > bands.linear_slope_l2r_max,
                      fmt(s) + " > " + fmt(bands.linear_slope_l2r_max)});
  }
  if (norga_exact && linear_over) {
    const double c = linear_over->slope_l1.slope - norga_exact->slope_l1.slope;
    checks.push_back({"slope_l1 contrast", c >= bands.contrast_min, fmt(c) + " >= " + fmt(bands.contrast_min)});
  }

  Json summary;
  summary["gates"] = Json::array();
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    Json rows = Json::array();
    for (const auto& row : r.rows) {
      rows.push_back({{"n", row.n},
                      {"l1", {row.l1.q1, row.l1.median, row.l1.q3}},
                      {"l2r", {row.l2r.q1, row.l2r.median, row.l2r.q3}},
                      {"l2mu", {row.l2mu.q1, row.l2mu.median, row.l2mu.q3}},
                      {"failures", row.failures}});
    }
    summary["gates"].push_back({{"gate", r.gate},
                                {"fitted_atoms", r.fitted_atoms},
                                {"extra_atoms", extras[k]},
                                {"slope_l1", r.slope_l1.slope},
                                {"slope_l2r", r.slope_l2r.slope},
                                {"slope_l2mu", r.slope_l2mu.slope},
                                {"fits", {{"l1", slope_json(r.slope_l1)},
                                          {"l2r", slope_json(r.slope_l2r)},
                                          {"l2mu", slope_json(r.slope_l2mu)}}},
                                {"quartiles", rows}});
  }
  bool ok = true;
  summary["checks"] = Json::array();
  for (const auto& c : checks) {
    ok = ok && c.passed;
    summary["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name << ": " << c.detail << '\n';
  }
  summary["passed"] = ok;
  cli::write_json(out / "rates_summary.json", summary);
  return ok ? kOk : kFail;
}

// ---- cl -------------------------------------------------------------------

struct ClRow {
  std::string gate;
  std::string activation;
  std::uint64_t seed;
  hide::RunResult result;
};

Json metrics_json(const hide::ClMetrics& m) {
  return {{"FA", m.fa}, {"CA", m.ca}, {"FM", m.fm}, {"A_t", m.a}};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_cl(const Json& cfg, const fs::path& out) {
  const cli::ClPlan plan = cli::cl_from(cfg);

  std::vector<ClRow> rows;
  for (const auto& gate : plan.gates) {
    std::vector<Activation> acts = plan.activations;
    if (gate != "norga") acts = {plan.activations.front()};
    for (Activation act : acts) {
      for (std::size_t s = 0; s < plan.seeds; ++s) {
        hide::RunConfig rc = plan.run;
        rc.seed = plan.run.seed + s;
        rc.hide.activation = act;
        if (gate == "norga") rc.hide.gate = hide::PromptGate::Norga;
        else rc.hide.gate = hide::PromptGate::Linear;
        if (gate == "none") rc.hide.prompt_length = 0;
        rows.push_back({gate, gate == "norga" ? std::string(to_string(act)) : "-", rc.seed, hide::run_stream(rc)});
      }
    }
  }

  {
    std::ofstream csv(out / "scores.csv");
    csv << "gate,activation,seed,mode,i,t,accuracy\n";
    csv << std::setprecision(10);
    for (const auto& r : rows) {
      for (int mode = 0; mode < 2; ++mode) {
        const Matrix& s = mode == 0 ? r.result.s : r.result.s_oracle;
        for (std::size_t t = 0; t < s.cols(); ++t)
          for (std::size_t i = 0; i <= t; ++i)
            csv << r.gate << ',' << r.activation << ',' << r.seed << ',' << (mode == 0 ? "cil" : "oracle") << ','
                << i + 1 << ',' << t + 1 << ',' << s(i, t) << '\n';
      }
    }
  }

  bool ok = true;
  Json runs = Json::array();
  std::cout << std::left << std::setw(8) << "gate" << std::setw(10) << "act" << std::setw(6) << "seed" << std::right
            << std::setw(8) << "FA" << std::setw(8) << "CA" << std::setw(8) << "FM" << std::setw(11) << "oracle FA"
            << '\n';
  for (const auto& r : rows) {
    const auto& m = r.result.metrics;
    const bool valid = std::isfinite(m.fa) && std::isfinite(m.ca) && std::isfinite(m.fm);
    const bool run_ok = valid && r.result.isolation_ok && r.result.prompts_frozen_ok;
    ok = ok && run_ok;
    std::cout << std::left << std::setw(8) << r.gate << std::setw(10) << r.activation << std::setw(6) << r.seed
              << std::right << std::fixed << std::setprecision(2) << std::setw(8) << m.fa << std::setw(8) << m.ca
              << std::setw(8) << m.fm << std::setw(11) << r.result.oracle_metrics.fa << std::defaultfloat;
    if (!r.result.isolation_ok) std::cout << "  ISOLATION VIOLATED";
    if (!r.result.prompts_frozen_ok) std::cout << "  PAST PROMPTS CHANGED";
    std::cout << '\n';
    Json j = metrics_json(m);
    j["gate"] = r.gate;
    j["activation"] = r.activation;
    j["seed"] = r.seed;
    j["oracle"] = metrics_json(r.result.oracle_metrics);
    j["isolation_ok"] = r.result.isolation_ok;
    j["prompts_frozen_ok"] = r.result.prompts_frozen_ok;
    j["alpha"] = r.result.alpha;
    j["tau"] = r.result.tau;
    runs.push_back(j);
  }

  Json summary = Json::array();
  if (plan.seeds > 1) {
    std::cout << "medians over " << plan.seeds << " seeds\n";
    for (std::size_t k = 0; k < rows.size(); k += plan.seeds) {
      std::vector<double> fa, ca, fm;
      for (std::size_t s = 0; s < plan.seeds; ++s) {
        fa.push_back(rows[k + s].result.metrics.fa);
        ca.push_back(rows[k + s].result.metrics.ca);
        fm.push_back(rows[k + s].result.metrics.fm);
      }
      const double mfa = median(fa), mca = median(ca), mfm = median(fm);
      std::cout << std::left << std::setw(8) << rows[k].gate << std::setw(10) << rows[k].activation << std::setw(6)
                << "med" << std::right << std::fixed << std::setprecision(2) << std::setw(8) << mfa << std::setw(8)
                << mca << std::setw(8) << mfm << std::defaultfloat << '\n';
      summary.push_back({{"gate", rows[k].gate}, {"activation", rows[k].activation}, {"FA", mfa}, {"CA", mca}, {"FM", mfm}});
    }
  }
  cli::write_json(out / "metrics.json", {{"runs", runs}, {"medians", summary}, {"passed", ok}});
  return ok ? kOk : kFail;
}

// ---- degenerate -----------------------------------------------------------

int run_degenerate(const Json& cfg, const fs::path& out) {
  const cli::DegeneratePlan plan = cli::degenerate_from(cfg);
  const cli::Bands bands = cli::bands_from(cfg);
  const auto problem = estimation::default_problem(estimation::GateKind::linear(), estimation::ExpertKind::Identity);
  const auto curve = estimation::degenerate_curve(problem, plan.ns, plan.r, plan.mc_points, plan.seed);

  double max_err = 0.0;
  std::ofstream csv(out / "degenerate.csv");
  csv << "n,loss,closed_form,abs_error,l2,ratio\n" << std::setprecision(17);
  std::cout << "       n         loss  closed-form err           l2        ratio\n";
  Json points = Json::array();
  for (const auto& p : curve) {
    const double err = std::abs(p.loss - p.closed_form);
    max_err = std::max(max_err, err);
    csv << p.n << ',' << p.loss << ',' << p.closed_form << ',' << err << ',' << p.l2 << ',' << p.ratio << '\n';
    std::cout << std::setw(8) << p.n << "  " << std::setw(11) << sci(p.loss) << "  " << std::setw(15) << sci(err)
              << "  " << std::setw(11) << sci(p.l2) << "  " << std::setw(11) << sci(p.ratio) << '\n';
    points.push_back({{"n", p.n}, {"loss", p.loss}, {"closed_form", p.closed_form}, {"l2", p.l2}, {"ratio", p.ratio}});
  }

  const bool closed_ok = max_err <= bands.closed_form_tol;
  std::cout << (closed_ok ? "PASS  " : "FAIL  ") << "closed form max error " << sci(max_err) << " <= "
            << sci(bands.closed_form_tol) << '\n';
  Json summary = {{"r", plan.r}, {"mc_points", plan.mc_points}, {"points", points},
                  {"closed_form_max_error", max_err}, {"closed_form_ok", closed_ok}};
  bool ok = closed_ok;
  if (curve.size() < 2) {
    std::cout << "single grid point: no trend claimed\n";
    summary["trend"] = nullptr;
  } else {
    const double first = curve.front().ratio;
    const double last = curve.back().ratio;
    bool monotone = true;
    for (std::size_t k = 1; k < curve.size(); ++k) monotone = monotone && curve[k].ratio < curve[k - 1].ratio;
    const bool trend_ok = last < bands.degenerate_ratio_max * first;
    ok = ok && trend_ok;
    std::cout << "ratio " << sci(first) << " -> " << sci(last) << " (" << fmt(last / first, 3) << "x)"
              << (monotone ? ", monotone decreasing" : ", not monotone") << '\n';
    std::cout << (trend_ok ? "CONSISTENT WITH LOWER BOUND" : "NOT CONSISTENT WITH LOWER BOUND") << '\n';
    summary["trend"] = {{"first_ratio", first}, {"last_ratio", last}, {"monotone", monotone}, {"passed", trend_ok}};
  }
  summary["passed"] = ok;
  cli::write_json(out / "degenerate.json", summary);
  return ok ? kOk : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  const Json defaults = cli::builtin_defaults();

  CLI::App app{"pmoe: prefix-tuning mixture-of-experts experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  std::string out_dir = defaults["out"];
  std::uint64_t seed = defaults["seed"];
  int jobs = defaults["jobs"];
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON file merged over the built-in defaults");
  auto* o_out = app.add_option("--out", out_dir, "Output directory, created if missing")->capture_default_str();
  auto* o_seed = app.add_option("--seed", seed, "Master seed")->capture_default_str();
  auto* o_jobs = app.add_option("--jobs", jobs, "Worker threads for trial fan-out")->capture_default_str();
  app.add_option("--set", sets, "Override any config key, e.g. --set bands.contrast_min=0.3");

  // verify
  auto* verify = app.add_subcommand("verify", "Attention/MoE equivalence, NoRGa reduction and gradient checks");
  long long v_trials = defaults["verify"]["trials"];
  long long v_grad = defaults["verify"]["grad_trials"];
  auto* o_vt = verify->add_option("--trials", v_trials, "Instances per equivalence property")->capture_default_str();
  auto* o_vg = verify->add_option("--grad-trials", v_grad, "Finite-difference instances")->capture_default_str();

  // rates
  auto* rates = app.add_subcommand("rates", "Estimation-rate experiments for NoRGa and linear gating");
  const Json& rd = defaults["rates"];
  std::string r_gate = rd["gate"], r_act = rd["activation"], r_expert = rd["expert"], r_opt = rd["optimizer"];
  std::vector<std::size_t> r_ns = rd["ns"];
  long long r_trials = rd["trials"], r_restarts = rd["restarts"], r_iters = rd["max_iterations"];
  long long r_over = rd["linear_extra_atoms"], r_mc = rd["mc_points"];
  double r_nu = rd["nu"], r_r = rd["r"];
  bool r_learn = rd["learn_gate"];
  auto* o_rg = rates->add_option("--gate", r_gate, "norga | linear | both")->capture_default_str();
  auto* o_ra = rates->add_option("--activation", r_act, "NoRGa activation: tanh | sigmoid | gelu")->capture_default_str();
  auto* o_re = rates->add_option("--expert", r_expert, "identity | relu | gelu | constant")->capture_default_str();
  auto* o_rover = rates->add_option("--overspecify", r_over,
                                    "Extra fitted atoms beyond the true count for the selected gate(s); "
                                    "defaults: norga 0, linear 1");
  auto* o_rt = rates->add_option("--trials", r_trials, "Trials per sample size")->capture_default_str();
  auto* o_rns = rates->add_option("--ns", r_ns, "Sample-size grid, comma separated")->delimiter(',')->capture_default_str();
  auto* o_rnu = rates->add_option("--nu", r_nu, "Noise standard deviation")->capture_default_str();
  auto* o_rmc = rates->add_option("--mc-points", r_mc, "Monte Carlo points for the L2(mu) error")->capture_default_str();
  auto* o_rr = rates->add_option("--r", r_r, "Exponent of the over-specified loss")->capture_default_str();
  auto* o_ro = rates->add_option("--optimizer", r_opt, "lm | adam")->capture_default_str();
  auto* o_rrs = rates->add_option("--restarts", r_restarts, "Random restarts per fit")->capture_default_str();
  auto* o_ri = rates->add_option("--iterations", r_iters, "LM iterations or Adam steps")->capture_default_str();
  auto* o_rl = rates->add_flag("--learn-gate", r_learn, "Also estimate the NoRGa alpha and tau");

  // cl
  auto* cl = app.add_subcommand("cl", "Class-incremental HiDe-Prompt runs on the synthetic task stream");
  const Json& cd = defaults["cl"];
  std::vector<std::string> c_gates = cd["gates"], c_acts = cd["activations"];
  long long c_seeds = cd["seeds"];
  long long c_tasks = cd["stream"]["tasks"], c_cpt = cd["stream"]["classes_per_task"];
  long long c_train = cd["stream"]["train_per_class"], c_test = cd["stream"]["test_per_class"];
  long long c_epochs = cd["hide"]["epochs"], c_plen = cd["hide"]["prompt_length"];
  double c_noise = cd["stream"]["noise"], c_tscale = cd["stream"]["task_scale"], c_lambda = cd["hide"]["lambda"];
  auto* o_cg = cl->add_option("--gate", c_gates, "Gates to run: norga, linear, none (comma separated)")
                   ->delimiter(',')
                   ->capture_default_str();
  auto* o_ca = cl->add_option("--activations,--activation", c_acts, "NoRGa activations: tanh, sigmoid, gelu")
                   ->delimiter(',')
                   ->capture_default_str();
  auto* o_cs = cl->add_option("--seeds", c_seeds, "Runs per configuration, seeds seed..seed+k-1")->capture_default_str();
  auto* o_ct = cl->add_option("--tasks", c_tasks, "Tasks in the stream")->capture_default_str();
  auto* o_ccpt = cl->add_option("--classes-per-task", c_cpt, "Classes per task")->capture_default_str();
  auto* o_ctr = cl->add_option("--train-per-class", c_train, "Training samples per class")->capture_default_str();
  auto* o_cte = cl->add_option("--test-per-class", c_test, "Test samples per class")->capture_default_str();
  auto* o_cn = cl->add_option("--noise", c_noise, "Token noise standard deviation")->capture_default_str();
  auto* o_cts = cl->add_option("--task-scale", c_tscale, "Spread of task means")->capture_default_str();
  auto* o_ce = cl->add_option("--epochs", c_epochs, "Epochs per task")->capture_default_str();
  auto* o_cp = cl->add_option("--prompt-length", c_plen, "Prompt length L")->capture_default_str();
  auto* o_cl = cl->add_option("--lambda", c_lambda, "Contrastive regularization weight")->capture_default_str();

  // degenerate
  auto* degen = app.add_subcommand("degenerate", "Ratio of function distance to parameter loss along a merging sequence");
  const Json& dd = defaults["degenerate"];
  double d_r = dd["r"], d_nmax = 0.0;
  long long d_mc = dd["mc_points"];
  auto* o_dr = degen->add_option("--r", d_r, "Loss exponent r")->capture_default_str();
  auto* o_dn = degen->add_option("--n-max", d_nmax, "Drop grid points above this n (grid from config: 4..256)");
  auto* o_dm = degen->add_option("--mc-points", d_mc, "Monte Carlo points")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  Json cfg;
  std::string command;
  Json extra = Json::object();
  try {
    cfg = cli::load_config(config_path);
    for (const auto& s : sets) cli::apply_override(cfg, s);
    set_if(cfg, o_out, "/out", out_dir);
    set_if(cfg, o_seed, "/seed", seed);
    set_if(cfg, o_jobs, "/jobs", jobs);

    if (verify->parsed()) {
      command = "verify";
      set_if(cfg, o_vt, "/verify/trials", v_trials);
      set_if(cfg, o_vg, "/verify/grad_trials", v_grad);
      cli::verify_from(cfg);
    } else if (rates->parsed()) {
      command = "rates";
      set_if(cfg, o_rg, "/rates/gate", r_gate);
      set_if(cfg, o_ra, "/rates/activation", r_act);
      set_if(cfg, o_re, "/rates/expert", r_expert);
      if (o_rover->count() > 0) {
        const std::string g = cfg["rates"]["gate"];
        if (g != "linear") cfg["rates"]["norga_extra_atoms"] = r_over;
        if (g != "norga") cfg["rates"]["linear_extra_atoms"] = r_over;
      }
      set_if(cfg, o_rt, "/rates/trials", r_trials);
      set_if(cfg, o_rns, "/rates/ns", r_ns);
      set_if(cfg, o_rnu, "/rates/nu", r_nu);
      set_if(cfg, o_rmc, "/rates/mc_points", r_mc);
      set_if(cfg, o_rr, "/rates/r", r_r);
      set_if(cfg, o_ro, "/rates/optimizer", r_opt);
      set_if(cfg, o_rrs, "/rates/restarts", r_restarts);
      set_if(cfg, o_ri, "/rates/max_iterations", r_iters);
      set_if(cfg, o_rl, "/rates/learn_gate", r_learn);
      const auto plan = cli::rates_from(cfg);
      cli::bands_from(cfg);
      extra["gates"] = plan.gates;
      extra["activation"] = to_string(plan.activation);
    } else if (cl->parsed()) {
      command = "cl";
      set_if(cfg, o_cg, "/cl/gates", c_gates);
      set_if(cfg, o_ca, "/cl/activations", c_acts);
      set_if(cfg, o_cs, "/cl/seeds", c_seeds);
      set_if(cfg, o_ct, "/cl/stream/tasks", c_tasks);
      set_if(cfg, o_ccpt, "/cl/stream/classes_per_task", c_cpt);
      set_if(cfg, o_ctr, "/cl/stream/train_per_class", c_train);
      set_if(cfg, o_cte, "/cl/stream/test_per_class", c_test);
      set_if(cfg, o_cn, "/cl/stream/noise", c_noise);
      set_if(cfg, o_cts, "/cl/stream/task_scale", c_tscale);
      set_if(cfg, o_ce, "/cl/hide/epochs", c_epochs);
      set_if(cfg, o_cp, "/cl/hide/prompt_length", c_plen);
      set_if(cfg, o_cl, "/cl/hide/lambda", c_lambda);
      const auto plan = cli::cl_from(cfg);
      extra["gates"] = plan.gates;
      Json acts = Json::array();
      for (auto a : plan.activations) acts.push_back(std::string(to_string(a)));
      extra["activations"] = acts;
    } else {
      command = "degenerate";
      set_if(cfg, o_dr, "/degenerate/r", d_r);
      set_if(cfg, o_dm, "/degenerate/mc_points", d_mc);
      if (o_dn->count() > 0) {
        Json kept = Json::array();
        for (const auto& n : cfg["degenerate"]["ns"])
          if (n.is_number() && n.get<double>() <= d_nmax) kept.push_back(n);
        if (kept.empty()) throw ConfigError("--n-max " + fmt(d_nmax) + " leaves no grid points");
        cfg["degenerate"]["ns"] = kept;
      }
      cli::degenerate_from(cfg);
      cli::bands_from(cfg);
    }
    if (!cfg["out"].is_string() || cfg["out"].get<std::string>().empty()) {
      throw ConfigError("config: 'out' must be a nonempty path");
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Json::exception& e) {
    std::cerr << "error: bad config value: " << e.what() << '\n';
    return kUsage;
  }

  const fs::path out = cfg["out"].get<std::string>();
  try {
    write_manifest(out, command, cfg, extra, args);
    if (command == "verify") return run_verify(cfg, out);
    if (command == "rates") return run_rates(cfg, out);
    if (command == "cl") return run_cl(cfg, out);
    return run_degenerate(cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
}
