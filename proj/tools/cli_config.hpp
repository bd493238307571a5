#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmoe/estimation/rates.hpp"
#include "pmoe/hide/runner.hpp"
#include "pmoe/verify.hpp"

namespace pmoe::cli {

using Json = nlohmann::json;

/// The defaults file compiled into the binary.
Json builtin_defaults();

/// Built-in defaults with the JSON file at `path` merged on top (RFC 7386).
/// Throws ConfigError on unreadable or malformed files, or a version mismatch.
Json load_config(const std::string& path);

/// Applies "a.b.c=value" to `cfg`. The value is parsed as JSON when possible,
/// otherwise taken as a string.
void apply_override(Json& cfg, const std::string& assignment);

/// FNV-1a of the compact dump.
std::uint64_t config_hash(const Json& cfg);
std::string hex(std::uint64_t v);

struct Bands {
  double slope_l1_lo = -0.65, slope_l1_hi = -0.35;
  double slope_l2mu_lo = -0.65, slope_l2mu_hi = -0.35;
  double linear_slope_l2r_max = -0.2;
  double contrast_min = 0.2;
  double degenerate_ratio_max = 0.5;
  double closed_form_tol = 1e-12;
};

struct RatesPlan {
  std::vector<std::string> gates;  // "norga", "linear"
  Activation activation = Activation::Tanh;
  estimation::ExpertKind expert = estimation::ExpertKind::Identity;
  std::size_t norga_extra_atoms = 0;
  std::size_t linear_extra_atoms = 1;
  estimation::RateConfig rate;
};

struct ClPlan {
  std::vector<std::string> gates;  // "norga", "linear", "none"
  std::vector<Activation> activations;
  std::size_t seeds = 1;
  hide::RunConfig run;
};

struct DegeneratePlan {
  std::vector<double> ns;
  double r = 1.0;
  std::size_t mc_points = 100000;
  std::uint64_t seed = 0;
};

// Each of these validates and throws ConfigError with the offending key.
Bands bands_from(const Json& cfg);
VerifyConfig verify_from(const Json& cfg);
RatesPlan rates_from(const Json& cfg);
ClPlan cl_from(const Json& cfg);
DegeneratePlan degenerate_from(const Json& cfg);

/// Writes `j` to `path` with a trailing newline, creating parent directories.
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace pmoe::cli
