#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerd/forward_model.hpp"
#include "nerd/priors.hpp"
#include "nerd/rng.hpp"
#include "nerd/samplers.hpp"

namespace nerd {

/// Bad configuration input (unknown key, malformed value, out-of-range number).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; a later key overrides an earlier one.
inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "<config>") {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = detail::trim(t.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_key_values(in, path);
}

/// Applies one "key=value" override.
inline void apply_override(KeyValues& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("--set: empty key in '" + assignment + "'");
  kv[key] = detail::trim(assignment.substr(eq + 1));
}

/// "w:mu:s, w:mu:s, ..."
inline std::vector<GmmComponent> parse_gmm_components(const std::string& text) {
  std::vector<GmmComponent> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    GmmComponent c{};
    char sep1 = 0, sep2 = 0;
    std::istringstream is(item);
    if (!(is >> c.weight >> sep1 >> c.mean >> sep2 >> c.stddev) || sep1 != ':' || sep2 != ':' ||
        !(is >> std::ws).eof())
      throw ConfigError("gmm_components: cannot parse '" + item + "' (expected weight:mean:std)");
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("gmm_components: no components given");
  return out;
}

inline std::string format_gmm_components(const std::vector<GmmComponent>& cs) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (i) os << ", ";
    os << cs[i].weight << ':' << cs[i].mean << ':' << cs[i].stddev;
  }
  return os.str();
}

/// Tissue levels of the Shepp-Logan benchmark phantom (background, brain,
/// small features, skull) with their 64x64x32 volume fractions.
inline std::vector<GmmComponent> default_gmm_components() {
  return {{0.74, 0.0, 0.03}, {0.21, 0.2, 0.03}, {0.015, 0.3, 0.03}, {0.035, 1.0, 0.03}};
}

/// Every setting of the command-line front end. Field names match the
/// config-file keys.
struct RunConfig {
  SamplerConfig sampler;

  // Geometry and measurement.
  std::size_t n_angles_full = 180;
  std::size_t n_views = 8;
  std::size_t n_detectors = 0;  // 0: ceil(sqrt(2) * nx)
  double detector_spacing = 1.0;
  double sigma_y = 0.1;  // noise variance 0.01

  // Phantom.
  std::size_t nx = 64, ny = 64, nz = 32;

  // Prior.
  std::string prior = "gmm";
  std::vector<GmmComponent> gmm_components = default_gmm_components();
  std::string conv_weights;

  // Training.
  std::size_t train_epochs = 20;
  double train_lr = 1e-3;
  std::size_t heldout_every = 4;  // every k-th axial slice is held out

  // Paths.
  std::string phantom = "phantom.raw";
  std::string sinogram = "sinogram.raw";
  std::string reconstruction = "recon.raw";
  std::string trace;  // empty: "<reconstruction>.trace.csv"
  std::string report = "report.json";
  std::string weights = "denoiser.raw";

  std::uint64_t seed = 0;
  bool record_timing = false;  // wall_ms in traces; off keeps outputs reproducible

  ProjectionGeometry geometry() const {
    ProjectionGeometry g = ProjectionGeometry::standard(nx);
    g.n_angles_full = n_angles_full;
    if (n_detectors > 0) g.n_detectors = n_detectors;
    g.detector_spacing = detector_spacing;
    return g;
  }

  std::string trace_path() const { return trace.empty() ? reconstruction + ".trace.csv" : trace; }

  static RunConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

namespace detail {

inline double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(out)) throw ConfigError("'" + key + "': expected a finite number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': integer out of range");
  }
}

inline std::string real_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  SamplerConfig& s = c.sampler;
  for (const auto& [key, value] : kv) {
    using detail::to_real;
    using detail::to_uint;
    if (key == "method") {
      try {
        s.method = parse_method(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "lambda") s.lambda = to_real(key, value);
    else if (key == "lambda_z") s.lambda_z = to_real(key, value);
    else if (key == "rho") s.rho = to_real(key, value);
    else if (key == "lambda_prime") s.lambda_prime = to_real(key, value);
    else if (key == "tau") s.tau = to_real(key, value);
    else if (key == "sigma") s.sigma = to_real(key, value);
    else if (key == "steps") s.steps = to_uint(key, value);
    else if (key == "adam_updates") s.adam_updates = to_uint(key, value);
    else if (key == "lr") s.adam.lr = to_real(key, value);
    else if (key == "adam_beta1") s.adam.beta1 = to_real(key, value);
    else if (key == "adam_beta2") s.adam.beta2 = to_real(key, value);
    else if (key == "adam_eps") s.adam.eps = to_real(key, value);
    else if (key == "dds_admm_iterations") s.dds_admm_iterations = to_uint(key, value);
    else if (key == "dds_gamma") s.dds_gamma = value.empty() ? std::nullopt : std::optional(to_real(key, value));
    else if (key == "cg_tol") s.cg_tol = to_real(key, value);
    else if (key == "cg_max_iter") s.cg_max_iter = to_uint(key, value);
    else if (key == "pdhg_order") {
      if (value == "primal_first") s.pdhg_order = PdhgOrder::primal_first;
      else if (value == "dual_first") s.pdhg_order = PdhgOrder::dual_first;
      else throw ConfigError("'pdhg_order': expected primal_first or dual_first");
    } else if (key == "lr_schedule") {
      if (value == "constant") s.lr_schedule = LrSchedule::constant;
      else if (value == "noise") s.lr_schedule = LrSchedule::noise;
      else throw ConfigError("'lr_schedule': expected constant or noise");
    } else if (key == "seed") c.seed = to_uint(key, value);
    else if (key == "record_timing") {
      if (value == "true") c.record_timing = true;
      else if (value == "false") c.record_timing = false;
      else throw ConfigError("'record_timing': expected true or false");
    }
    else if (key == "n_angles_full") c.n_angles_full = to_uint(key, value);
    else if (key == "n_views") c.n_views = to_uint(key, value);
    else if (key == "n_detectors") c.n_detectors = to_uint(key, value);
    else if (key == "detector_spacing") c.detector_spacing = to_real(key, value);
    else if (key == "sigma_y") c.sigma_y = to_real(key, value);
    else if (key == "nx") c.nx = to_uint(key, value);
    else if (key == "ny") c.ny = to_uint(key, value);
    else if (key == "nz") c.nz = to_uint(key, value);
    else if (key == "prior") {
      if (value != "gmm" && value != "conv") throw ConfigError("'prior': expected gmm or conv");
      c.prior = value;
    } else if (key == "gmm_components") c.gmm_components = parse_gmm_components(value);
    else if (key == "conv_weights") c.conv_weights = value;
    else if (key == "train_epochs") c.train_epochs = to_uint(key, value);
    else if (key == "train_lr") c.train_lr = to_real(key, value);
    else if (key == "heldout_every") c.heldout_every = to_uint(key, value);
    else if (key == "phantom") c.phantom = value;
    else if (key == "sinogram") c.sinogram = value;
    else if (key == "reconstruction") c.reconstruction = value;
    else if (key == "trace") c.trace = value;
    else if (key == "report") c.report = value;
    else if (key == "weights") c.weights = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  s.seed = c.seed;
  if (c.nx == 0 || c.ny == 0 || c.nz == 0) throw ConfigError("'nx', 'ny' and 'nz' must be >= 1");
  if (c.sigma_y < 0.0) throw ConfigError("'sigma_y' must be >= 0");
  if (c.n_angles_full == 0) throw ConfigError("'n_angles_full' must be >= 1");
  if (c.n_views == 0 || c.n_views > c.n_angles_full) throw ConfigError("'n_views' must lie in [1, n_angles_full]");
  if (c.detector_spacing <= 0.0) throw ConfigError("'detector_spacing' must be positive");
  if (c.heldout_every < 2) throw ConfigError("'heldout_every' must be >= 2");
  try {
    s.validate();
    GmmScalarPrior check(c.gmm_components);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Seed of the measurement-noise stream, kept apart from the sampler's
/// Rng(seed) so simulated noise and the initial x_T are uncorrelated.
inline std::uint64_t measurement_noise_seed(std::uint64_t seed) {
  std::uint64_t state = seed ^ 0x6d65617375726521ULL;
  return splitmix64(state);
}

inline KeyValues RunConfig::to_key_values() const {
  using detail::real_text;
  const SamplerConfig& s = sampler;
  KeyValues kv{
      {"method", method_name(s.method)},
      {"lambda", real_text(s.lambda)},
      {"lambda_z", real_text(s.lambda_z)},
      {"rho", real_text(s.rho)},
      {"lambda_prime", real_text(s.lambda_prime)},
      {"tau", real_text(s.tau)},
      {"sigma", real_text(s.sigma)},
      {"steps", std::to_string(s.steps)},
      {"adam_updates", std::to_string(s.adam_updates)},
      {"lr", real_text(s.adam.lr)},
      {"adam_beta1", real_text(s.adam.beta1)},
      {"adam_beta2", real_text(s.adam.beta2)},
      {"adam_eps", real_text(s.adam.eps)},
      {"dds_admm_iterations", std::to_string(s.dds_admm_iterations)},
      {"dds_gamma", s.dds_gamma ? real_text(*s.dds_gamma) : ""},
      {"cg_tol", real_text(s.cg_tol)},
      {"cg_max_iter", std::to_string(s.cg_max_iter)},
      {"pdhg_order", s.pdhg_order == PdhgOrder::primal_first ? "primal_first" : "dual_first"},
      {"lr_schedule", s.lr_schedule == LrSchedule::constant ? "constant" : "noise"},
      {"seed", std::to_string(seed)},
      {"record_timing", record_timing ? "true" : "false"},
      {"n_angles_full", std::to_string(n_angles_full)},
      {"n_views", std::to_string(n_views)},
      {"n_detectors", std::to_string(n_detectors)},
      {"detector_spacing", real_text(detector_spacing)},
      {"sigma_y", real_text(sigma_y)},
      {"nx", std::to_string(nx)},
      {"ny", std::to_string(ny)},
      {"nz", std::to_string(nz)},
      {"prior", prior},
      {"gmm_components", format_gmm_components(gmm_components)},
      {"conv_weights", conv_weights},
      {"train_epochs", std::to_string(train_epochs)},
      {"train_lr", real_text(train_lr)},
      {"heldout_every", std::to_string(heldout_every)},
      {"phantom", phantom},
      {"sinogram", sinogram},
      {"reconstruction", reconstruction},
      {"trace", trace},
      {"report", report},
      {"weights", weights},
  };
  return kv;
}

}  // namespace nerd
