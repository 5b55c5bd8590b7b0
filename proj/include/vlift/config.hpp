#pragma once

// JSON experiment configuration. Unknown keys are rejected at every level and
// the schema version must be present.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vlift/bsde.hpp"
#include "vlift/error.hpp"
#include "vlift/forward.hpp"
#include "vlift/hamiltonian.hpp"
#include "vlift/kernels.hpp"
#include "vlift/problem.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

inline constexpr int kSchemaVersion = 1;

struct DiscretizationConfig {
  int n = 8;
  double kappa_min = 0.01;
  double kappa_max = 100.0;
};

struct SchemeConfig {
  double dt = 0.01;
  double T = 1.0;
  int paths = 256;
};

struct ControlConfig {
  double T = 20.0;
  double dt = 0.05;
  int paths = 4096;
  /// Constant candidates per control axis.
  int constants = 5;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name;
  KernelSpec kernel;
  std::optional<DiscretizationConfig> discretization;
  Matrix A;
  HistoryDatum history;
  std::string f = "zero", r = "zero", ell = "zero";
  Matrix g;
  double lambda = 1.0;
  ControlSet controls;
  SchemeConfig scheme;
  BsdeConfig bsde;
  ControlConfig control;
  std::vector<double> horizons;
  std::uint64_t seed = 0;
  std::string output = "out";
  nlohmann::json source;

  int dim() const { return static_cast<int>(A.rows()); }
};

/// FNV-1a over the canonical (sorted-key) serialization.
inline std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  c.source = j;
  try {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    detail::reject_unknown(j, {"schema_version", "name", "kernel", "discretization", "space", "history", "problem",
                               "scheme", "bsde", "control", "horizons", "seed", "output"},
                           "config");
    if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kSchemaVersion) {
      throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
    }
    c.name = detail::get_or<std::string>(j, "name", "experiment");
    c.kernel = kernel_from_json(j.at("kernel"));
    if (j.contains("discretization")) {
      const auto& d = j.at("discretization");
      detail::reject_unknown(d, {"n", "kappa_min", "kappa_max"}, "discretization");
      c.discretization = DiscretizationConfig{d.at("n").get<int>(), d.at("kappa_min").get<double>(),
                                              d.at("kappa_max").get<double>()};
    } else if (!is_discrete(c.kernel)) {
      throw ConfigError("config: non-discrete kernels need a discretization block");
    }
    const auto& sp = j.at("space");
    detail::reject_unknown(sp, {"A"}, "space");
    c.A = matrix_from_json(sp.at("A"), "space.A");
    if (c.A.rows() != c.A.cols()) throw ConfigError("space.A must be square");
    const int d = c.dim();
    c.history = j.contains("history") ? history_from_json(j.at("history"), d) : HistoryDatum{history::Zero{d}};
    if (history_dim(c.history) != d) throw ConfigError("history dimension does not match A");

    const auto& p = j.at("problem");
    detail::reject_unknown(p, {"f", "g", "r", "ell", "lambda", "controls"}, "problem");
    c.f = detail::get_or<std::string>(p, "f", "zero");
    c.r = detail::get_or<std::string>(p, "r", "zero");
    c.ell = detail::get_or<std::string>(p, "ell", "zero");
    c.g = matrix_from_json(p.at("g"), "problem.g");
    c.lambda = p.at("lambda").get<double>();
    const auto& u = p.at("controls");
    detail::reject_unknown(u, {"lo", "hi", "resolution", "refinements"}, "controls");
    const auto lo = u.at("lo").get<std::vector<double>>();
    const auto hi = u.at("hi").get<std::vector<double>>();
    if (lo.size() != hi.size()) throw ConfigError("controls: lo and hi differ in length");
    c.controls.lo = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    c.controls.hi = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    c.controls.resolution = detail::get_or<int>(u, "resolution", 101);
    c.controls.refinements = detail::get_or<int>(u, "refinements", 30);

    if (j.contains("scheme")) {
      const auto& s = j.at("scheme");
      detail::reject_unknown(s, {"dt", "T", "paths"}, "scheme");
      c.scheme.dt = detail::get_or(s, "dt", c.scheme.dt);
      c.scheme.T = detail::get_or(s, "T", c.scheme.T);
      c.scheme.paths = detail::get_or(s, "paths", c.scheme.paths);
    }
    if (j.contains("bsde")) {
      const auto& b = j.at("bsde");
      detail::reject_unknown(b, {"horizon", "dt", "paths", "degree", "features", "clamp"}, "bsde");
      c.bsde.horizon = detail::get_or(b, "horizon", c.bsde.horizon);
      c.bsde.dt = detail::get_or(b, "dt", c.bsde.dt);
      c.bsde.paths = detail::get_or(b, "paths", c.bsde.paths);
      c.bsde.degree = detail::get_or(b, "degree", c.bsde.degree);
      c.bsde.features = feature_set_from_string(detail::get_or<std::string>(b, "features", to_string(c.bsde.features)));
      c.bsde.clamp = detail::get_or(b, "clamp", c.bsde.clamp);
    }
    if (j.contains("control")) {
      const auto& b = j.at("control");
      detail::reject_unknown(b, {"T", "dt", "paths", "constants"}, "control");
      c.control.T = detail::get_or(b, "T", c.control.T);
      c.control.dt = detail::get_or(b, "dt", c.control.dt);
      c.control.paths = detail::get_or(b, "paths", c.control.paths);
      c.control.constants = detail::get_or(b, "constants", c.control.constants);
    }
    c.horizons = detail::get_or<std::vector<double>>(j, "horizons", {});
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    c.output = detail::get_or<std::string>(j, "output", "out");
    (void)step_count(c.scheme.T, c.scheme.dt);
    (void)c.bsde.steps();
    (void)step_count(c.control.T, c.control.dt);
    detail::require(c.scheme.paths >= 1 && c.control.paths >= 1 && c.bsde.paths >= 1, "path counts must be >= 1");
    detail::require(c.control.constants >= 2, "control.constants must be >= 2");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

/// Measure of the lift: exact for discrete kernels, discretized otherwise.
inline BernsteinMeasure config_measure(const ExperimentConfig& c) {
  if (auto mu = exact_measure(c.kernel)) return *mu;
  const auto& d = *c.discretization;
  return discretize(c.kernel, d.n, d.kappa_min, d.kappa_max).measure;
}

inline LiftedSpace config_space(const ExperimentConfig& c) {
  try {
    return LiftedSpace(c.A, config_measure(c));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const NumericalError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// Builds the problem from registry names and attaches the closed-form
/// Hamiltonian minimizer when the (ℓ, r) pair admits one.
inline ControlProblem config_problem(const ExperimentConfig& c) {
  try {
    ControlProblem p;
    c.controls.validate();
    p.f = make_drift(c.f, c.dim());
    p.g = c.g;
    p.r = make_channel(c.r, static_cast<int>(c.g.cols()), c.controls);
    p.ell = make_cost(c.ell, c.controls);
    p.lambda = c.lambda;
    p.controls = c.controls;
    p.validate(c.dim());
    p.exact_argmin = closed_form_argmin(p);
    return p;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline State config_initial_state(const ExperimentConfig& c, const LiftedSpace& space) {
  return lift_history(space, c.history);
}

}  // namespace vlift
