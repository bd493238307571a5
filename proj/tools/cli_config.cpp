#include "cli_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pmoe/error.hpp"
#include "pmoe_defaults.hpp"

namespace pmoe::cli {

namespace {

constexpr int kConfigVersion = 1;

const Json& at(const Json& j, const std::string& path) {
  const Json* cur = &j;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ConfigError("config: missing key '" + path + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *cur;
}

double num(const Json& j, const std::string& path) {
  const Json& v = at(j, path);
  if (!v.is_number()) throw ConfigError("config: '" + path + "' must be a number");
  return v.get<double>();
}

std::size_t count(const Json& j, const std::string& path, std::size_t min = 0) {
  const Json& v = at(j, path);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config: '" + path + "' must be a non-negative integer");
  }
  const auto n = v.get<std::size_t>();
  if (n < min) throw ConfigError("config: '" + path + "' must be at least " + std::to_string(min));
  return n;
}

bool flag(const Json& j, const std::string& path) {
  const Json& v = at(j, path);
  if (!v.is_boolean()) throw ConfigError("config: '" + path + "' must be true or false");
  return v.get<bool>();
}

std::string str(const Json& j, const std::string& path) {
  const Json& v = at(j, path);
  if (!v.is_string()) throw ConfigError("config: '" + path + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> strings(const Json& j, const std::string& path) {
  const Json& v = at(j, path);
  std::vector<std::string> out;
  if (v.is_string()) {
    std::stringstream ss(v.get<std::string>());
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) out.push_back(item);
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError("config: '" + path + "' must hold strings");
      out.push_back(e.get<std::string>());
    }
  } else {
    throw ConfigError("config: '" + path + "' must be a string or list of strings");
  }
  if (out.empty()) throw ConfigError("config: '" + path + "' is empty");
  return out;
}

std::vector<double> numbers(const Json& j, const std::string& path) {
  const Json& v = at(j, path);
  if (!v.is_array() || v.empty()) throw ConfigError("config: '" + path + "' must be a nonempty list");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("config: '" + path + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::uint64_t seed_of(const Json& j) {
  const Json& v = at(j, "seed");
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("config: 'seed' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

Activation activation_of(const std::string& name, const std::string& path) {
  try {
    return parse_activation(name);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + path + "' has unknown activation '" + name + "' (tanh|sigmoid|gelu)");
  }
}

void check_choice(const std::string& v, std::initializer_list<const char*> choices, const std::string& path) {
  for (const char* c : choices)
    if (v == c) return;
  std::string msg = "config: '" + path + "' has invalid value '" + v + "' (expected";
  for (const char* c : choices) msg += std::string(" ") + c;
  throw ConfigError(msg + ")");
}

}  // namespace

Json builtin_defaults() { return Json::parse(kDefaultsJson); }

Json load_config(const std::string& path) {
  Json cfg = builtin_defaults();
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  Json user;
  try {
    user = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  if (!user.is_object()) throw ConfigError("config: '" + path + "' must hold a JSON object");
  if (user.contains("version") && user["version"] != kConfigVersion) {
    throw ConfigError("config: '" + path + "' has version " + user["version"].dump() + ", expected " +
                      std::to_string(kConfigVersion));
  }
  cfg.merge_patch(user);
  return cfg;
}

void apply_override(Json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  const Json::json_pointer ptr(pointer);
  if (!cfg.contains(ptr)) throw ConfigError("--set: unknown key '" + key + "'");
  cfg[ptr] = value;
}

std::uint64_t config_hash(const Json& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

Bands bands_from(const Json& cfg) {
  Bands b;
  auto pair = [&](const std::string& key, double& lo, double& hi) {
    const auto v = numbers(cfg, key);
    if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError("config: '" + key + "' must be [lo, hi] with lo < hi");
    lo = v[0];
    hi = v[1];
  };
  pair("bands.slope_l1", b.slope_l1_lo, b.slope_l1_hi);
  pair("bands.slope_l2mu", b.slope_l2mu_lo, b.slope_l2mu_hi);
  b.linear_slope_l2r_max = num(cfg, "bands.linear_slope_l2r_max");
  b.contrast_min = num(cfg, "bands.contrast_min");
  b.degenerate_ratio_max = num(cfg, "bands.degenerate_ratio_max");
  b.closed_form_tol = num(cfg, "bands.closed_form_tol");
  if (!(b.degenerate_ratio_max > 0.0)) throw ConfigError("config: 'bands.degenerate_ratio_max' must be positive");
  if (!(b.closed_form_tol >= 0.0)) throw ConfigError("config: 'bands.closed_form_tol' must be non-negative");
  return b;
}

VerifyConfig verify_from(const Json& cfg) {
  VerifyConfig v;
  v.trials = count(cfg, "verify.trials", 1);
  v.grad_trials = count(cfg, "verify.grad_trials", 1);
  v.seed = seed_of(cfg);
  return v;
}

RatesPlan rates_from(const Json& cfg) {
  RatesPlan p;
  const std::string gate = str(cfg, "rates.gate");
  check_choice(gate, {"norga", "linear", "both"}, "rates.gate");
  if (gate == "both") p.gates = {"norga", "linear"};
  else p.gates = {gate};
  p.activation = activation_of(str(cfg, "rates.activation"), "rates.activation");
  try {
    p.expert = estimation::parse_expert(str(cfg, "rates.expert"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: 'rates.expert': ") + e.what());
  }
  p.norga_extra_atoms = count(cfg, "rates.norga_extra_atoms");
  p.linear_extra_atoms = count(cfg, "rates.linear_extra_atoms");

  auto& r = p.rate;
  const auto ns = numbers(cfg, "rates.ns");
  if (ns.size() < 2) throw ConfigError("config: 'rates.ns' needs at least two sample sizes");
  r.ns.clear();
  for (double n : ns) {
    if (!(n >= 1.0) || n != static_cast<double>(static_cast<std::size_t>(n))) {
      throw ConfigError("config: 'rates.ns' must hold positive integers");
    }
    r.ns.push_back(static_cast<std::size_t>(n));
  }
  if (!std::is_sorted(r.ns.begin(), r.ns.end()) ||
      std::adjacent_find(r.ns.begin(), r.ns.end()) != r.ns.end()) {
    throw ConfigError("config: 'rates.ns' must be strictly increasing");
  }
  r.trials = static_cast<int>(count(cfg, "rates.trials", 1));
  r.nu = num(cfg, "rates.nu");
  if (!(r.nu >= 0.0)) throw ConfigError("config: 'rates.nu' must be non-negative");
  r.mc_points = count(cfg, "rates.mc_points", 1);
  r.r = num(cfg, "rates.r");
  if (!(r.r >= 1.0)) throw ConfigError("config: 'rates.r' must be at least 1");
  r.jobs = static_cast<int>(count(cfg, "jobs", 1));
  r.seed = seed_of(cfg);

  const std::string opt = str(cfg, "rates.optimizer");
  check_choice(opt, {"lm", "adam"}, "rates.optimizer");
  r.fit.optimizer = opt == "lm" ? estimation::Optimizer::LevenbergMarquardt : estimation::Optimizer::Adam;
  r.fit.restarts = static_cast<int>(count(cfg, "rates.restarts", 1));
  r.fit.max_iterations = static_cast<int>(count(cfg, "rates.max_iterations", 1));
  r.fit.learning_rate = num(cfg, "rates.learning_rate");
  if (!(r.fit.learning_rate > 0.0)) throw ConfigError("config: 'rates.learning_rate' must be positive");
  r.fit.learn_gate = flag(cfg, "rates.learn_gate");
  return p;
}

ClPlan cl_from(const Json& cfg) {
  ClPlan p;
  p.gates = strings(cfg, "cl.gates");
  for (const auto& g : p.gates) check_choice(g, {"norga", "linear", "none"}, "cl.gates");
  for (const auto& a : strings(cfg, "cl.activations")) p.activations.push_back(activation_of(a, "cl.activations"));
  p.seeds = count(cfg, "cl.seeds", 1);

  auto& s = p.run.stream;
  s.tasks = count(cfg, "cl.stream.tasks");
  s.classes_per_task = count(cfg, "cl.stream.classes_per_task");
  s.train_per_class = count(cfg, "cl.stream.train_per_class");
  s.test_per_class = count(cfg, "cl.stream.test_per_class");
  s.seq_len = count(cfg, "cl.stream.seq_len");
  s.dim = count(cfg, "cl.stream.dim");
  s.task_scale = num(cfg, "cl.stream.task_scale");
  s.class_scale = num(cfg, "cl.stream.class_scale");
  s.noise = num(cfg, "cl.stream.noise");
  s.base_classes = count(cfg, "cl.stream.base_classes");
  s.validate();

  auto& b = p.run.backbone;
  b.heads = count(cfg, "cl.backbone.heads", 1);
  b.pretrain_epochs = count(cfg, "cl.backbone.pretrain_epochs");
  b.batch = count(cfg, "cl.backbone.batch", 1);
  b.lr = num(cfg, "cl.backbone.lr");
  if (!(b.lr > 0.0)) throw ConfigError("config: 'cl.backbone.lr' must be positive");
  if (s.dim % b.heads != 0) throw ConfigError("config: 'cl.stream.dim' must be divisible by 'cl.backbone.heads'");

  auto& h = p.run.hide;
  h.prompt_length = count(cfg, "cl.hide.prompt_length");
  h.alpha_init = num(cfg, "cl.hide.alpha_init");
  h.tau_init = num(cfg, "cl.hide.tau_init");
  h.learn_gate = flag(cfg, "cl.hide.learn_gate");
  h.pe_alpha = num(cfg, "cl.hide.pe_alpha");
  h.lambda = num(cfg, "cl.hide.lambda");
  h.cr_temperature = num(cfg, "cl.hide.cr_temperature");
  h.cr_normalize = flag(cfg, "cl.hide.cr_normalize");
  h.lr = num(cfg, "cl.hide.lr");
  h.batch = count(cfg, "cl.hide.batch");
  h.epochs = count(cfg, "cl.hide.epochs");
  h.pseudo_per_class = count(cfg, "cl.hide.pseudo_per_class");
  h.tii_passes = count(cfg, "cl.hide.tii_passes");
  h.tap_passes = count(cfg, "cl.hide.tap_passes");
  h.prompt_init = num(cfg, "cl.hide.prompt_init");
  h.validate();

  p.run.seed = seed_of(cfg);
  return p;
}

DegeneratePlan degenerate_from(const Json& cfg) {
  DegeneratePlan p;
  p.ns = numbers(cfg, "degenerate.ns");
  for (double n : p.ns)
    if (!(n >= 1.0)) throw ConfigError("config: 'degenerate.ns' must hold values >= 1");
  if (!std::is_sorted(p.ns.begin(), p.ns.end())) throw ConfigError("config: 'degenerate.ns' must be increasing");
  p.r = num(cfg, "degenerate.r");
  if (!(p.r >= 1.0)) throw ConfigError("config: 'degenerate.r' must be at least 1");
  p.mc_points = count(cfg, "degenerate.mc_points", 1);
  p.seed = seed_of(cfg);
  return p;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

}  // namespace pmoe::cli
