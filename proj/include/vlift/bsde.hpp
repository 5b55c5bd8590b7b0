#pragma once

// Discounted BSDE dY = (λY − ψ(Jx, Z))dt + Z dW on [0, n], Y(n) = 0, solved
// backward by regression Monte Carlo over uncontrolled forward paths:
//
//   Ê_k = E[Y_{k+1} | x_k],   Z_k = E[(Y_{k+1} − Ê_k)·ΔW_k | x_k]/Δt,
//   Y_k = (Ê_k + Δt·ψ(Jx_k, Z_k))/(1 + λΔt).
//
// Subtracting Ê_k leaves the Z regression unbiased and removes most of its
// variance. v(x) = Y₀ of a solve started at x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vlift/error.hpp"
#include "vlift/forward.hpp"
#include "vlift/hamiltonian.hpp"
#include "vlift/parallel.hpp"
#include "vlift/problem.hpp"
#include "vlift/regression.hpp"
#include "vlift/rng.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

struct BsdeConfig {
  double horizon = 10.0;
  double dt = 0.05;
  int paths = 4096;
  int degree = 2;
  FeatureSet features = FeatureSet::OutputConvolution;
  bool clamp = true;
  int workers = 1;
  double max_condition = 1e12;
  /// Number of (path, slice) states sampled for the ψ constants.
  int constant_samples = 512;

  int steps() const { return step_count(horizon, dt); }

  void validate(const ControlProblem& p) const {
    detail::require(horizon > 0.0 && dt > 0.0, "BSDE horizon and step must be positive");
    detail::require(paths >= 1, "BSDE needs at least one path");
    detail::require(degree >= 0, "basis degree must be >= 0");
    detail::require(max_condition > 1.0, "condition limit must exceed 1");
    (void)steps();
    (void)p;
  }
};

struct SliceFit {
  PolynomialBasis basis;
  /// columns: [conditional expectation, Z components]
  LeastSquaresFit fit;
};

struct BsdeDiagnostics {
  long long samples = 0;
  long long bound_violations = 0;
  long long clamped = 0;
  double max_abs_preclamp = 0.0;
  double max_condition = 1.0;
  double max_abs_z = 0.0;

  double violation_fraction() const { return samples == 0 ? 0.0 : static_cast<double>(bound_violations) / samples; }
};

struct BsdeSolution {
  BsdeConfig config;
  double lambda = 1.0;
  int noise_dim = 1;
  double y0 = 0.0;
  /// Standard error of Y₀ from the pathwise discounted-driver estimator.
  double y0_std_error = 0.0;
  /// Mean over paths of Σ_k Δt(1+λΔt)^{-(k+1)}ψ(Jx_k, Z_k).
  double y0_pathwise = 0.0;
  double M = 0.0;
  double K = 0.0;
  bool constants_certified = true;
  /// (M/λ)e^{−λn}
  double certificate = 0.0;
  /// (M/λ)(1+λΔt)^{−K}: the tail the implicit recursion actually drops. Exceeds
  /// `certificate` by about e^{nλ²Δt/2}.
  double discrete_certificate = 0.0;
  BsdeDiagnostics diagnostics;
  std::vector<SliceFit> slices;
  std::vector<double> z0;  // Z at slice 0
  std::uint64_t seed = 0;

  int steps() const noexcept { return static_cast<int>(slices.size()); }
  double bound() const noexcept { return M / lambda; }
  double tail_bound() const noexcept { return std::max(certificate, discrete_certificate); }
};

/// Larger of the continuous and discrete truncation bounds for `steps` remaining steps of size dt.
inline double truncation_bound(double M, double lambda, double dt, int steps) {
  return M / lambda * std::max(std::exp(-lambda * steps * dt), std::pow(1.0 + lambda * dt, -steps));
}

namespace detail {

struct ForwardSample {
  int paths = 0, steps = 0, F = 0, d = 0, m = 0;
  std::vector<double> features;  // paths × (steps+1) × F
  std::vector<double> dw;        // paths × steps × m

  auto feat(int p, int k) const {
    return Eigen::Map<const Vector>(&features[(static_cast<std::size_t>(p) * (steps + 1) + k) * F], F);
  }
  auto noise(int p, int k) const {
    return Eigen::Map<const Vector>(&dw[(static_cast<std::size_t>(p) * steps + k) * m], m);
  }
};

inline ForwardSample forward_sample(const LiftedSpace& space, const ControlProblem& problem, const State& x0,
                                    const Vector& u0, const BsdeConfig& cfg, std::uint64_t seed) {
  ForwardSample s;
  s.paths = cfg.paths;
  s.steps = cfg.steps();
  s.d = space.dim();
  s.m = problem.noise_dim();
  s.F = feature_count(cfg.features, space.dim(), space.nodes());
  s.features.assign(static_cast<std::size_t>(s.paths) * (s.steps + 1) * s.F, 0.0);
  s.dw.assign(static_cast<std::size_t>(s.paths) * s.steps * s.m, 0.0);
  const Stepper stepper(space, problem, cfg.dt);
  const PathNoise noise(seed);
  const Policy none = Policy::uncontrolled();
  parallel_for(static_cast<std::size_t>(s.paths), cfg.workers, [&](std::size_t pi) {
    run_path(stepper, none, x0, u0, s.steps, noise, pi, 0.0,
             [&](int k, const State& x, const Vector&, const Vector*, const Vector* dw) {
               Eigen::Map<Vector>(&s.features[(pi * (s.steps + 1) + k) * s.F], s.F) =
                   state_features(space, cfg.features, x);
               if (dw != nullptr) Eigen::Map<Vector>(&s.dw[(pi * s.steps + k) * s.m], s.m) = *dw;
             });
  });
  return s;
}

}  // namespace detail

/// Truncated-horizon solve from x₀. `initial_output` restarts the scheme from a
/// stored (x, u) pair; by default u⁰ = Jx₀.
inline BsdeSolution solve_truncated(const LiftedSpace& space, const ControlProblem& problem, const State& x0,
                                    const BsdeConfig& cfg, std::uint64_t seed,
                                    const std::optional<Vector>& initial_output = std::nullopt) {
  problem.validate(space.dim());
  cfg.validate(problem);
  space.check_state(x0);
  const Vector u0 = initial_output.value_or(output_map(space, x0));
  const int d = space.dim(), m = problem.noise_dim();
  const int K = cfg.steps();
  const int P = cfg.paths;
  const double dt = cfg.dt, lambda = problem.lambda;
  const double disc = 1.0 / (1.0 + lambda * dt);

  const auto fwd = detail::forward_sample(space, problem, x0, u0, cfg, seed);

  BsdeSolution sol;
  sol.config = cfg;
  sol.lambda = lambda;
  sol.noise_dim = m;
  sol.seed = seed;

  // ψ constants over visited observations and a spread of z values.
  {
    const PathNoise pick(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Vector> us, zs;
    const int n_states = std::min<long long>(cfg.constant_samples, static_cast<long long>(P) * (K + 1));
    for (int i = 0; i < n_states; ++i) {
      const Vector r = pick.normals(i, 0, 2);
      const double a = 0.5 * (1.0 + std::erf(r[0] / std::sqrt(2.0)));
      const double b = 0.5 * (1.0 + std::erf(r[1] / std::sqrt(2.0)));
      const int p = std::min(P - 1, static_cast<int>(a * P));
      const int k = std::min(K, static_cast<int>(b * (K + 1)));
      us.push_back(fwd.feat(p, k).head(d));
    }
    for (int j = 0; j < 16; ++j) zs.push_back(2.0 * pick.normals(j, 1, m));
    const auto c = estimate_psi_constants(problem, us, zs);
    sol.M = c.M;
    sol.K = c.K;
    sol.constants_certified = c.certified;
  }
  const double bound = sol.M / lambda;
  sol.certificate = bound * std::exp(-lambda * cfg.horizon);
  sol.discrete_certificate = bound * std::pow(1.0 + lambda * dt, -K);

  std::vector<double> Y(P, 0.0), Ynext(P, 0.0);
  // Pathwise estimator: discounted sum of Δtψ along each path.
  std::vector<double> path_sum(P, 0.0);
  std::vector<double> psi_k(P, 0.0);
  sol.slices.resize(K);

  Matrix phi, targets(P, 1 + m);
  Matrix feats(P, fwd.F);
  for (int k = K - 1; k >= 0; --k) {
    Ynext.swap(Y);
    for (int p = 0; p < P; ++p) feats.row(p) = fwd.feat(p, k).transpose();
    auto basis = PolynomialBasis::fit(feats, cfg.degree);
    const int L = basis.size();
    phi.resize(P, L);
    parallel_for(static_cast<std::size_t>(P), cfg.workers,
                 [&](std::size_t p) { phi.row(p) = basis.eval(fwd.feat(static_cast<int>(p), k)).transpose(); });

    // Conditional expectation first, then Z on the centred target.
    for (int p = 0; p < P; ++p) targets(p, 0) = Ynext[p];
    auto e_fit = least_squares(phi, targets.leftCols(1), cfg.max_condition);
    const Vector e_hat = phi * e_fit.coefficients.col(0);
    for (int p = 0; p < P; ++p) {
      const auto dw = fwd.noise(p, k);
      for (int j = 0; j < m; ++j) targets(p, 1 + j) = (Ynext[p] - e_hat[p]) * dw[j] / dt;
    }
    auto z_fit = least_squares(phi, targets.rightCols(m), cfg.max_condition);

    LeastSquaresFit joint;
    joint.coefficients.resize(L, 1 + m);
    joint.coefficients.col(0) = e_fit.coefficients.col(0);
    joint.coefficients.rightCols(m) = z_fit.coefficients;
    joint.gram_inverse = e_fit.gram_inverse;
    joint.sigma.resize(1 + m);
    joint.sigma[0] = e_fit.sigma[0];
    joint.sigma.tail(m) = z_fit.sigma;
    joint.condition = e_fit.condition;
    sol.diagnostics.max_condition = std::max(sol.diagnostics.max_condition, e_fit.condition);

    const Matrix z_all = phi * z_fit.coefficients;
    parallel_for(static_cast<std::size_t>(P), cfg.workers, [&](std::size_t pi) {
      const int p = static_cast<int>(pi);
      const Vector z = z_all.row(p).transpose();
      psi_k[p] = psi(problem, Vector(fwd.feat(p, k).head(d)), z).value;
      Y[p] = (e_hat[p] + dt * psi_k[p]) * disc;
    });
    for (int p = 0; p < P; ++p) {
      sol.diagnostics.max_abs_z = std::max(sol.diagnostics.max_abs_z, z_all.row(p).lpNorm<Eigen::Infinity>());
      path_sum[p] = (path_sum[p] + dt * psi_k[p]) * disc;
      ++sol.diagnostics.samples;
      const double a = std::abs(Y[p]);
      sol.diagnostics.max_abs_preclamp = std::max(sol.diagnostics.max_abs_preclamp, a);
      if (a > bound * (1.0 + 1e-12)) {
        ++sol.diagnostics.bound_violations;
        if (cfg.clamp) {
          Y[p] = std::clamp(Y[p], -bound, bound);
          ++sol.diagnostics.clamped;
        }
      }
    }
    if (k == 0) {
      const Vector z0 = z_all.row(0).transpose();
      sol.z0.assign(z0.data(), z0.data() + m);
    }
    sol.slices[k] = SliceFit{std::move(basis), std::move(joint)};
  }

  double mean = 0.0, pmean = 0.0;
  for (int p = 0; p < P; ++p) {
    mean += Y[p];
    pmean += path_sum[p];
  }
  mean /= P;
  pmean /= P;
  double var = 0.0;
  for (int p = 0; p < P; ++p) var += (path_sum[p] - pmean) * (path_sum[p] - pmean);
  sol.y0 = mean;
  sol.y0_pathwise = pmean;
  sol.y0_std_error = P > 1 ? std::sqrt(var / (P - 1) / P) : 0.0;
  return sol;
}

inline double value(const LiftedSpace& space, const ControlProblem& problem, const State& x, const BsdeConfig& cfg,
                    std::uint64_t seed, const std::optional<Vector>& initial_output = std::nullopt) {
  return solve_truncated(space, problem, x, cfg, seed, initial_output).y0;
}

inline void check_slice(const BsdeSolution& sol, int k) {
  if (k < 0 || k >= sol.steps()) throw InvalidArgument("slice " + std::to_string(k) + " out of range");
}

inline Vector z_estimate(const LiftedSpace& space, const BsdeSolution& sol, int k, const State& x) {
  check_slice(sol, k);
  const auto& s = sol.slices[k];
  const Vector phi = s.basis.eval(state_features(space, sol.config.features, x));
  return s.fit.coefficients.rightCols(sol.noise_dim).transpose() * phi;
}

/// Regression standard error of z_estimate at x.
inline Vector z_standard_error(const LiftedSpace& space, const BsdeSolution& sol, int k, const State& x) {
  check_slice(sol, k);
  const auto& s = sol.slices[k];
  const Vector phi = s.basis.eval(state_features(space, sol.config.features, x));
  return s.fit.standard_error(phi).tail(sol.noise_dim);
}

/// Y_k(x) as produced by the backward recursion (clamped when the solve clamps).
inline double y_estimate(const LiftedSpace& space, const ControlProblem& problem, const BsdeSolution& sol, int k,
                         const State& x) {
  check_slice(sol, k);
  const auto& s = sol.slices[k];
  const Vector phi = s.basis.eval(state_features(space, sol.config.features, x));
  const double e = s.fit.coefficients.col(0).dot(phi);
  const Vector z = s.fit.coefficients.rightCols(sol.noise_dim).transpose() * phi;
  double y = (e + sol.config.dt * psi(problem, output_map(space, x), z).value) / (1.0 + problem.lambda * sol.config.dt);
  if (sol.config.clamp) y = std::clamp(y, -sol.bound(), sol.bound());
  return y;
}

inline double y_standard_error(const LiftedSpace& space, const BsdeSolution& sol, int k, const State& x) {
  check_slice(sol, k);
  const auto& s = sol.slices[k];
  const Vector phi = s.basis.eval(state_features(space, sol.config.features, x));
  return s.fit.standard_error(phi)[0];
}

// Truncation ------------------------------------------------------------------

struct TruncationReport {
  std::vector<double> horizons;
  std::vector<double> y0;
  std::vector<double> std_errors;
  std::vector<double> differences;   // |Y₀(nᵢ) − Y₀(n_max)|
  std::vector<double> certificates;  // (M/λ)e^{−λnᵢ}
  std::vector<bool> used_in_fit;
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
  std::string note;
  /// Every difference ≤ 2·certificate.
  bool within_certificate = true;
};

/// Solves at each horizon with one seed, so shorter horizons use prefixes of the
/// same Brownian paths. Points below the Monte Carlo noise floor are left out of
/// the log-linear fit.
inline TruncationReport truncation_study(const LiftedSpace& space, const ControlProblem& problem, const State& x,
                                         std::vector<double> horizons, const BsdeConfig& cfg, std::uint64_t seed) {
  detail::require(horizons.size() >= 3, "truncation study needs at least 3 horizons");
  std::sort(horizons.begin(), horizons.end());
  TruncationReport rep;
  rep.horizons = horizons;
  double M = 0.0;
  for (double n : horizons) {
    BsdeConfig c = cfg;
    c.horizon = n;
    const auto sol = solve_truncated(space, problem, x, c, seed);
    rep.y0.push_back(sol.y0);
    rep.std_errors.push_back(sol.y0_std_error);
    M = std::max(M, sol.M);
  }
  const double top = rep.y0.back();
  const double top_se = rep.std_errors.back();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    const double diff = std::abs(rep.y0[i] - top);
    rep.differences.push_back(diff);
    rep.certificates.push_back(M / problem.lambda * std::exp(-problem.lambda * horizons[i]));
    if (i + 1 < horizons.size() && diff > 2.0 * rep.certificates.back()) rep.within_certificate = false;
    const double floor = 3.0 * std::hypot(rep.std_errors[i], top_se) + 1e-13 * std::max(1.0, std::abs(top));
    const bool use = i + 1 < horizons.size() && diff > floor;
    rep.used_in_fit.push_back(use);
    if (use) {
      xs.push_back(horizons[i]);
      ys.push_back(std::log(diff));
    }
  }
  if (xs.size() < 2) {
    rep.degenerate = true;
    rep.note = "fewer than two differences above the noise floor";
    return rep;
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  rep.intercept = (sy - rep.slope * sx) / n;
  return rep;
}

// Identification checks ---------------------------------------------------------

struct MarkovProbe {
  int path = 0;
  int slice = 0;
  double stored = 0.0;
  double fresh = 0.0;
  double discrepancy = 0.0;
  double tolerance = 0.0;
};

struct MarkovReport {
  std::vector<MarkovProbe> probes;
  double max_discrepancy = 0.0;
  bool pass = true;
};

/// Recovers (x_k, u_k) on a training path by re-simulating it from the seed.
inline std::pair<State, Vector> training_state(const LiftedSpace& space, const ControlProblem& problem,
                                               const State& x0, const BsdeConfig& cfg, std::uint64_t seed, int path,
                                               int k) {
  SimulationOptions opts;
  opts.first_path = static_cast<std::uint64_t>(path);
  const auto b = simulate(space, problem, Policy::uncontrolled(), x0, k * cfg.dt, cfg.dt, 1, seed, opts);
  return {State(b.state(0, k)), Vector(b.output(0, k))};
}

/// Stored Y_k on training paths against fresh full-horizon solves at x_k (same
/// seed). Tolerance: 3 combined standard errors plus both truncation certificates.
inline MarkovReport markov_consistency(const LiftedSpace& space, const ControlProblem& problem, const State& x0,
                                       const BsdeConfig& cfg, std::uint64_t seed, int probes,
                                       std::optional<int> slice = std::nullopt, double min_remaining = -1.0) {
  const auto sol = solve_truncated(space, problem, x0, cfg, seed);
  const int K = sol.steps();
  const double margin = min_remaining >= 0.0 ? min_remaining : 5.0 / problem.lambda;
  const int k_max = std::max(0, std::min(K - 1, static_cast<int>(std::floor((cfg.horizon - margin) / cfg.dt))));
  const PathNoise pick(seed ^ 0x3c6ef372fe94f82bull);
  MarkovReport rep;
  for (int i = 0; i < probes; ++i) {
    const Vector r = pick.normals(i, 0, 2);
    const double a = 0.5 * (1.0 + std::erf(r[0] / std::sqrt(2.0)));
    const double b = 0.5 * (1.0 + std::erf(r[1] / std::sqrt(2.0)));
    MarkovProbe pr;
    pr.path = std::min(cfg.paths - 1, static_cast<int>(a * cfg.paths));
    pr.slice = slice.value_or(std::min(k_max, static_cast<int>(b * (k_max + 1))));
    const auto [xk, uk] = training_state(space, problem, x0, cfg, seed, pr.path, pr.slice);
    pr.stored = pr.slice == 0 ? sol.y0 : y_estimate(space, problem, sol, pr.slice, xk);
    const auto fresh = solve_truncated(space, problem, xk, cfg, seed, uk);
    pr.fresh = fresh.y0;
    pr.discrepancy = std::abs(pr.stored - pr.fresh);
    const double se_stored = pr.slice == 0 ? sol.y0_std_error : y_standard_error(space, sol, pr.slice, xk);
    pr.tolerance = 3.0 * std::hypot(se_stored, fresh.y0_std_error) +
                   truncation_bound(sol.M, problem.lambda, cfg.dt, K - pr.slice) + fresh.tail_bound();
    rep.max_discrepancy = std::max(rep.max_discrepancy, pr.discrepancy);
    if (pr.discrepancy > pr.tolerance) rep.pass = false;
    rep.probes.push_back(pr);
  }
  return rep;
}

struct MildHjbReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double std_error = 0.0;
  double certificate = 0.0;
  int probes = 0;
  int check_steps = 0;
  bool pass = true;
};

/// v(x) against (1+λΔt)^{-K}·E v(x_K) + E Σ_{k<K} Δt(1+λΔt)^{-(k+1)}ψ(Jx_k, z_k), K = T_check/Δt,
/// over `probes` fresh uncontrolled paths; v(x_K) from nested solves with the same seed.
inline MildHjbReport verify_mild_hjb(const LiftedSpace& space, const ControlProblem& problem, const BsdeConfig& cfg,
                                     const State& x, double t_check, std::uint64_t seed, int probes = 16,
                                     int max_nested = 64) {
  detail::require(probes >= 1, "mild-HJB check needs at least one probe");
  if (probes > max_nested) throw InvalidArgument("nested-solve budget exceeded");
  const int kc = step_count(t_check, cfg.dt);
  const auto sol = solve_truncated(space, problem, x, cfg, seed);
  detail::require(kc < sol.steps(), "T_check must be shorter than the BSDE horizon");
  const double disc = 1.0 / (1.0 + problem.lambda * cfg.dt);
  MildHjbReport rep;
  rep.lhs = sol.y0;
  rep.probes = probes;
  rep.check_steps = kc;

  SimulationOptions opts;
  opts.workers = cfg.workers;
  const std::uint64_t probe_seed = seed ^ 0xbb67ae8584caa73bull;
  const auto bundle = simulate(space, problem, Policy::uncontrolled(), x, kc * cfg.dt, cfg.dt, probes, probe_seed, opts);
  std::vector<double> est(probes);
  double nested_var = 0.0;
  double cert = sol.tail_bound();
  for (int j = 0; j < probes; ++j) {
    double integral = 0.0, w = 1.0;
    for (int k = 0; k < kc; ++k) {
      w *= disc;
      const State xk = bundle.state(j, k);
      integral += w * cfg.dt * psi(problem, output_map(space, xk), z_estimate(space, sol, k, xk)).value;
    }
    const auto end = solve_truncated(space, problem, State(bundle.state(j, kc)), cfg, seed, Vector(bundle.output(j, kc)));
    est[j] = std::pow(disc, kc) * end.y0 + integral;
    nested_var += end.y0_std_error * end.y0_std_error;
    cert = std::max(cert, end.tail_bound());
  }
  double mean = 0.0;
  for (double e : est) mean += e;
  mean /= probes;
  double var = 0.0;
  for (double e : est) var += (e - mean) * (e - mean);
  var = probes > 1 ? var / (probes - 1) : 0.0;
  rep.rhs = mean;
  rep.residual = std::abs(rep.lhs - rep.rhs);
  rep.std_error = std::sqrt(var / probes + nested_var / (static_cast<double>(probes) * probes) +
                            sol.y0_std_error * sol.y0_std_error);
  rep.certificate = cert;
  rep.pass = rep.residual <= 3.0 * rep.std_error + 2.0 * cert + 1e-12;
  return rep;
}

// Serialization -----------------------------------------------------------------

inline nlohmann::json to_json(const BsdeConfig& c) {
  return {{"horizon", c.horizon}, {"dt", c.dt},       {"paths", c.paths},
          {"degree", c.degree},   {"features", to_string(c.features)}, {"clamp", c.clamp},
          {"max_condition", c.max_condition}};
}

inline nlohmann::json to_json(const BsdeSolution& s) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& sl : s.slices) {
    slices.push_back({{"basis", sl.basis.to_json()},
                      {"coefficients", matrix_to_json(sl.fit.coefficients)},
                      {"gram_inverse", matrix_to_json(sl.fit.gram_inverse)},
                      {"sigma", std::vector<double>(sl.fit.sigma.data(), sl.fit.sigma.data() + sl.fit.sigma.size())},
                      {"condition", sl.fit.condition}});
  }
  return {{"config", to_json(s.config)},
          {"lambda", s.lambda},
          {"noise_dim", s.noise_dim},
          {"seed", s.seed},
          {"y0", s.y0},
          {"y0_std_error", s.y0_std_error},
          {"y0_pathwise", s.y0_pathwise},
          {"z0", s.z0},
          {"M", s.M},
          {"K", s.K},
          {"constants_certified", s.constants_certified},
          {"certificate", s.certificate},
          {"discrete_certificate", s.discrete_certificate},
          {"diagnostics",
           {{"samples", s.diagnostics.samples},
            {"bound_violations", s.diagnostics.bound_violations},
            {"clamped", s.diagnostics.clamped},
            {"max_abs_preclamp", s.diagnostics.max_abs_preclamp},
            {"max_condition", s.diagnostics.max_condition},
            {"max_abs_z", s.diagnostics.max_abs_z}}},
          {"slices", slices}};
}

inline BsdeSolution bsde_solution_from_json(const nlohmann::json& j) {
  BsdeSolution s;
  const auto& c = j.at("config");
  s.config.horizon = c.at("horizon").get<double>();
  s.config.dt = c.at("dt").get<double>();
  s.config.paths = c.at("paths").get<int>();
  s.config.degree = c.at("degree").get<int>();
  s.config.features = feature_set_from_string(c.at("features").get<std::string>());
  s.config.clamp = c.at("clamp").get<bool>();
  s.config.max_condition = c.at("max_condition").get<double>();
  s.lambda = j.at("lambda").get<double>();
  s.noise_dim = j.at("noise_dim").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.y0 = j.at("y0").get<double>();
  s.y0_std_error = j.at("y0_std_error").get<double>();
  s.y0_pathwise = j.at("y0_pathwise").get<double>();
  s.z0 = j.at("z0").get<std::vector<double>>();
  s.M = j.at("M").get<double>();
  s.K = j.at("K").get<double>();
  s.constants_certified = j.at("constants_certified").get<bool>();
  s.certificate = j.at("certificate").get<double>();
  s.discrete_certificate = j.at("discrete_certificate").get<double>();
  const auto& d = j.at("diagnostics");
  s.diagnostics.samples = d.at("samples").get<long long>();
  s.diagnostics.bound_violations = d.at("bound_violations").get<long long>();
  s.diagnostics.clamped = d.at("clamped").get<long long>();
  s.diagnostics.max_abs_preclamp = d.at("max_abs_preclamp").get<double>();
  s.diagnostics.max_condition = d.at("max_condition").get<double>();
  s.diagnostics.max_abs_z = d.at("max_abs_z").get<double>();
  for (const auto& sl : j.at("slices")) {
    SliceFit f;
    f.basis = PolynomialBasis::from_json(sl.at("basis"));
    f.fit.coefficients = matrix_from_json(sl.at("coefficients"), "coefficients");
    f.fit.gram_inverse = matrix_from_json(sl.at("gram_inverse"), "gram_inverse");
    const auto sig = sl.at("sigma").get<std::vector<double>>();
    f.fit.sigma = Eigen::Map<const Vector>(sig.data(), static_cast<Eigen::Index>(sig.size()));
    f.fit.condition = sl.at("condition").get<double>();
    s.slices.push_back(std::move(f));
  }
  return s;
}

}  // namespace vlift
