#pragma once

// Completely monotone kernels a(t) = ∫ e^{-κt} ν(dκ): exact finite Bernstein
// measures, fractional (power-law) families, and their discretization into
// exponential sums.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlift/error.hpp"

namespace vlift {

/// Finite Bernstein measure ν = Σ νᵢ δ_{κᵢ}. Nodes strictly increasing and
/// non-negative, weights strictly positive.
class BernsteinMeasure {
 public:
  BernsteinMeasure() = default;

  BernsteinMeasure(std::vector<double> nodes, std::vector<double> weights)
      : nodes_(std::move(nodes)), weights_(std::move(weights)) {
    detail::require(!nodes_.empty(), "Bernstein measure needs at least one node");
    detail::require(nodes_.size() == weights_.size(), "nodes and weights differ in length");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      detail::require(std::isfinite(nodes_[i]) && nodes_[i] >= 0.0, "nodes must be finite and >= 0");
      detail::require(std::isfinite(weights_[i]) && weights_[i] > 0.0, "weights must be finite and > 0");
      if (i > 0) detail::require(nodes_[i] > nodes_[i - 1], "nodes must be strictly increasing");
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double node(std::size_t i) const { return nodes_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

  /// Σνᵢ, which equals a(0+) of the exponential sum.
  double total_mass() const noexcept {
    double m = 0.0;
    for (double w : weights_) m += w;
    return m;
  }

  double operator()(double t) const noexcept {
    double a = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) a += weights_[i] * std::exp(-nodes_[i] * t);
    return a;
  }

  /// â(s) = Σ νᵢ / (s + κᵢ)
  double laplace(double s) const noexcept {
    double v = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) v += weights_[i] / (s + nodes_[i]);
    return v;
  }

  friend bool operator==(const BernsteinMeasure&, const BernsteinMeasure&) = default;

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

namespace kernel {

struct Discrete {
  BernsteinMeasure measure;
};

/// a(t) = c·t^{β-1}/Γ(β), β ∈ (0,1).
struct Fractional {
  double beta = 0.5;
  double scale = 1.0;
};

/// a(t) = c·e^{-σ₀t}·t^{β-1}/Γ(β).
struct ShiftedFractional {
  double beta = 0.5;
  double shift = 0.0;
  double scale = 1.0;
};

/// Unordered list of (κ, ν) terms; duplicates are merged on conversion.
struct FiniteMixture {
  std::vector<std::pair<double, double>> terms;
};

}  // namespace kernel

using KernelSpec =
    std::variant<kernel::Discrete, kernel::Fractional, kernel::ShiftedFractional, kernel::FiniteMixture>;

inline KernelSpec make_discrete(std::vector<double> nodes, std::vector<double> weights) {
  return kernel::Discrete{BernsteinMeasure(std::move(nodes), std::move(weights))};
}

inline KernelSpec make_fractional(double beta, double scale = 1.0) {
  detail::require(beta > 0.0 && beta < 1.0, "fractional kernel requires beta in (0,1)");
  detail::require(scale > 0.0, "kernel scale must be positive");
  return kernel::Fractional{beta, scale};
}

inline KernelSpec make_shifted_fractional(double beta, double shift, double scale = 1.0) {
  detail::require(beta > 0.0 && beta < 1.0, "fractional kernel requires beta in (0,1)");
  detail::require(shift >= 0.0, "shift must be >= 0");
  detail::require(scale > 0.0, "kernel scale must be positive");
  return kernel::ShiftedFractional{beta, shift, scale};
}

namespace detail {

inline BernsteinMeasure mixture_measure(const kernel::FiniteMixture& mix) {
  require(!mix.terms.empty(), "finite mixture needs at least one term");
  auto terms = mix.terms;
  std::sort(terms.begin(), terms.end());
  std::vector<double> nodes, weights;
  for (const auto& [k, w] : terms) {
    if (!nodes.empty() && nodes.back() == k) {
      weights.back() += w;
    } else {
      nodes.push_back(k);
      weights.push_back(w);
    }
  }
  return BernsteinMeasure(std::move(nodes), std::move(weights));
}

inline void validate_fractional(double beta, double scale) {
  require(beta > 0.0 && beta < 1.0, "fractional kernel requires beta in (0,1)");
  require(scale > 0.0, "kernel scale must be positive");
}

// Bernstein density prefactor: t^{β-1}/Γ(β) = ∫ e^{-κt} sin(πβ)/π κ^{-β} dκ.
inline double fractional_density_constant(double beta, double scale) {
  return scale * std::sin(std::numbers::pi * beta) / std::numbers::pi;
}

}  // namespace detail

/// Exact measure for family variants that carry one, nullopt for analytic families.
inline std::optional<BernsteinMeasure> exact_measure(const KernelSpec& family) {
  if (const auto* d = std::get_if<kernel::Discrete>(&family)) return d->measure;
  if (const auto* m = std::get_if<kernel::FiniteMixture>(&family)) return detail::mixture_measure(*m);
  return std::nullopt;
}

inline bool is_discrete(const KernelSpec& family) {
  return std::holds_alternative<kernel::Discrete>(family) || std::holds_alternative<kernel::FiniteMixture>(family);
}

inline void validate(const KernelSpec& family) {
  std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::Fractional>) {
          detail::validate_fractional(k.beta, k.scale);
        } else if constexpr (std::is_same_v<T, kernel::ShiftedFractional>) {
          detail::validate_fractional(k.beta, k.scale);
          detail::require(k.shift >= 0.0, "shift must be >= 0");
        } else if constexpr (std::is_same_v<T, kernel::FiniteMixture>) {
          (void)detail::mixture_measure(k);
        } else {
          detail::require(k.measure.size() > 0, "discrete kernel has an empty measure");
        }
      },
      family);
}

inline double eval_kernel(const KernelSpec& family, double t) {
  detail::require(t > 0.0, "kernel evaluation requires t > 0");
  return std::visit(
      [t](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::Discrete>) {
          return k.measure(t);
        } else if constexpr (std::is_same_v<T, kernel::FiniteMixture>) {
          return detail::mixture_measure(k)(t);
        } else if constexpr (std::is_same_v<T, kernel::Fractional>) {
          return k.scale * std::pow(t, k.beta - 1.0) / std::tgamma(k.beta);
        } else {
          return k.scale * std::exp(-k.shift * t) * std::pow(t, k.beta - 1.0) / std::tgamma(k.beta);
        }
      },
      family);
}

inline double laplace(const KernelSpec& family, double s) {
  return std::visit(
      [s](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::ShiftedFractional>) {
          detail::require(s > -k.shift, "laplace transform requires s > -shift");
          return k.scale * std::pow(s + k.shift, -k.beta);
        } else {
          detail::require(s > 0.0, "laplace transform requires s > 0");
          if constexpr (std::is_same_v<T, kernel::Fractional>) {
            return k.scale * std::pow(s, -k.beta);
          } else if constexpr (std::is_same_v<T, kernel::Discrete>) {
            return k.measure.laplace(s);
          } else {
            return detail::mixture_measure(k).laplace(s);
          }
        }
      },
      family);
}

struct AlphaReport {
  double alpha = 0.0;
  /// α(a) > 1/2
  bool smoothing_condition = false;
};

/// Singularity index α(a) = sup{ρ : ∫_c^∞ s^{ρ-2}/â(s) ds < ∞}. For power
/// laws â(s) ~ s^{-β} so the integrand is s^{ρ-2+β}; for finite measures
/// â(s) ~ ‖ν‖/s gives α = 0.
inline AlphaReport alpha_index(const KernelSpec& family) {
  validate(family);
  const double alpha = std::visit(
      [](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::Fractional> || std::is_same_v<T, kernel::ShiftedFractional>) {
          return 1.0 - k.beta;
        } else {
          return 0.0;
        }
      },
      family);
  return {alpha, alpha > 0.5};
}

struct ShiftedCmReport {
  bool pass = false;
  std::optional<double> violating_node;
  /// Time beyond which e^{σt}a(t) stops decreasing.
  std::optional<double> violating_time;
};

/// Whether e^{σt}a(t) is completely monotone.
inline ShiftedCmReport check_shifted_cm(const KernelSpec& family, double sigma) {
  detail::require(sigma >= 0.0, "sigma must be >= 0");
  validate(family);
  if (auto mu = exact_measure(family)) {
    // e^{σt}Σνᵢe^{-κᵢt} = Σνᵢe^{-(κᵢ-σ)t}: CM iff every shifted node is >= 0.
    if (mu->node(0) >= sigma) return {true, std::nullopt, std::nullopt};
    return {false, mu->node(0), std::nullopt};
  }
  return std::visit(
      [sigma](const auto& k) -> ShiftedCmReport {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::Fractional>) {
          if (sigma == 0.0) return {true, std::nullopt, std::nullopt};
          return {false, std::nullopt, (1.0 - k.beta) / sigma};
        } else if constexpr (std::is_same_v<T, kernel::ShiftedFractional>) {
          if (sigma <= k.shift) return {true, std::nullopt, std::nullopt};
          return {false, std::nullopt, (1.0 - k.beta) / (sigma - k.shift)};
        } else {
          return {};
        }
      },
      family);
}

struct FitError {
  double sup_rel_error = 0.0;
  double l1_error = 0.0;
};

/// Sup relative and trapezoid L¹ error of `measure` against `family` on a
/// log-spaced grid of `samples` points over [t_min, t_max].
inline FitError fit_error(const KernelSpec& family, const BernsteinMeasure& measure,
                          std::pair<double, double> window, int samples = 200) {
  const auto [t_min, t_max] = window;
  detail::require(t_min > 0.0, "fit window requires t_min > 0");
  detail::require(t_max > t_min, "fit window is empty");
  detail::require(samples >= 2, "fit_error needs at least two samples");
  FitError err;
  const double ratio = std::log(t_max / t_min);
  double prev_t = 0.0, prev_diff = 0.0;
  for (int j = 0; j < samples; ++j) {
    const double t = t_min * std::exp(ratio * j / (samples - 1));
    const double exact = eval_kernel(family, t);
    const double diff = std::abs(measure(t) - exact);
    err.sup_rel_error = std::max(err.sup_rel_error, diff / std::abs(exact));
    if (j > 0) err.l1_error += 0.5 * (diff + prev_diff) * (t - prev_t);
    prev_t = t;
    prev_diff = diff;
  }
  return err;
}

struct DiscretizationReport {
  BernsteinMeasure measure;
  double sup_rel_error = 0.0;
  double l1_error = 0.0;
  std::pair<double, double> t_window;
  /// α of the kernel that was discretized (gates control experiments).
  AlphaReport parent_alpha;
};

/// Exponential-sum approximation of an analytic kernel: geometric bins on
/// [κ_min, κ_max] (the first bin absorbs the mass of [0, κ_min]), node at the
/// ν-barycenter of each bin and weight equal to its ν-mass. `window` selects
/// the t-range of the reported fit errors, defaulting to [1/κ_max, 1/κ_min].
inline DiscretizationReport discretize(const KernelSpec& family, int n, double kappa_min, double kappa_max,
                                       std::optional<std::pair<double, double>> window = std::nullopt,
                                       int samples = 200) {
  validate(family);
  detail::require(n >= 1, "discretization needs N >= 1");
  detail::require(kappa_min > 0.0 && kappa_max > kappa_min, "degenerate discretization range");
  const auto win = window.value_or(std::pair{1.0 / kappa_max, 1.0 / kappa_min});

  DiscretizationReport report;
  report.t_window = win;
  report.parent_alpha = alpha_index(family);

  if (auto mu = exact_measure(family)) {
    const bool inside = mu->node(0) >= kappa_min && mu->nodes().back() <= kappa_max;
    if (static_cast<std::size_t>(n) < mu->size() || !inside) {
      throw InvalidArgument("discrete kernels are already exponential sums; re-binning is not supported");
    }
    report.measure = *mu;
    const auto e = fit_error(family, report.measure, win, samples);
    report.sup_rel_error = e.sup_rel_error;
    report.l1_error = e.l1_error;
    return report;
  }

  double beta = 0.0, shift = 0.0, scale = 1.0;
  if (const auto* f = std::get_if<kernel::Fractional>(&family)) {
    beta = f->beta;
    scale = f->scale;
  } else {
    const auto& sf = std::get<kernel::ShiftedFractional>(family);
    beta = sf.beta;
    shift = sf.shift;
    scale = sf.scale;
  }
  const double c = detail::fractional_density_constant(beta, scale);
  std::vector<double> nodes(n), weights(n);
  const double growth = std::log(kappa_max / kappa_min) / n;
  for (int j = 0; j < n; ++j) {
    const double lo = j == 0 ? 0.0 : kappa_min * std::exp(growth * j);
    const double hi = kappa_min * std::exp(growth * (j + 1));
    // ∫ y^{-β} dy and ∫ y^{1-β} dy over the bin, in the shifted variable y = κ - σ₀.
    const double mass = c * (std::pow(hi, 1.0 - beta) - std::pow(lo, 1.0 - beta)) / (1.0 - beta);
    const double moment = c * (std::pow(hi, 2.0 - beta) - std::pow(lo, 2.0 - beta)) / (2.0 - beta);
    weights[j] = mass;
    nodes[j] = shift + moment / mass;
  }
  report.measure = BernsteinMeasure(std::move(nodes), std::move(weights));
  const auto e = fit_error(family, report.measure, win, samples);
  report.sup_rel_error = e.sup_rel_error;
  report.l1_error = e.l1_error;
  return report;
}

// JSON ---------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json kernel_to_json(const KernelSpec& family) {
  return std::visit(
      [](const auto& k) -> nlohmann::json {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, kernel::Discrete>) {
          return {{"variant", "discrete"}, {"nodes", k.measure.nodes()}, {"weights", k.measure.weights()}};
        } else if constexpr (std::is_same_v<T, kernel::Fractional>) {
          return {{"variant", "fractional"}, {"beta", k.beta}, {"scale", k.scale}};
        } else if constexpr (std::is_same_v<T, kernel::ShiftedFractional>) {
          return {{"variant", "shifted_fractional"}, {"beta", k.beta}, {"shift", k.shift}, {"scale", k.scale}};
        } else {
          nlohmann::json terms = nlohmann::json::array();
          for (const auto& [kap, w] : k.terms) terms.push_back({kap, w});
          return {{"variant", "finite_mixture"}, {"terms", terms}};
        }
      },
      family);
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("variant")) throw ConfigError("kernel: missing 'variant'");
  const auto variant = j.at("variant").get<std::string>();
  try {
    if (variant == "discrete") {
      detail::reject_unknown(j, {"variant", "nodes", "weights"}, "kernel");
      return make_discrete(j.at("nodes").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>());
    }
    if (variant == "fractional") {
      detail::reject_unknown(j, {"variant", "beta", "scale"}, "kernel");
      return make_fractional(j.at("beta").get<double>(), j.value("scale", 1.0));
    }
    if (variant == "shifted_fractional") {
      detail::reject_unknown(j, {"variant", "beta", "shift", "scale"}, "kernel");
      return make_shifted_fractional(j.at("beta").get<double>(), j.at("shift").get<double>(), j.value("scale", 1.0));
    }
    if (variant == "finite_mixture") {
      detail::reject_unknown(j, {"variant", "terms"}, "kernel");
      kernel::FiniteMixture mix;
      for (const auto& t : j.at("terms")) mix.terms.emplace_back(t.at(0).get<double>(), t.at(1).get<double>());
      KernelSpec family = mix;
      validate(family);
      return family;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("kernel: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("kernel: ") + e.what());
  }
  throw ConfigError("kernel: unknown variant '" + variant + "'");
}

}  // namespace vlift
