#pragma once

// Controlled lifted state equation, resolvent-structured implicit Euler:
//
//   D·u^{n+1} = Σ νᵢκᵢxᵢⁿ/(1+κᵢΔt) + f(uⁿ) + g·r(Jxⁿ, γⁿ) + g·ΔWⁿ/Δt,
//   xᵢ^{n+1}  = (xᵢⁿ + Δt·u^{n+1})/(1+κᵢΔt),
//
// with D = s·â(s)·I − A at s = 1/Δt. uⁿ is the Volterra output; Jxⁿ is the
// state observation used by the control channel, the cost and the feedback.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vlift/csv.hpp"
#include "vlift/error.hpp"
#include "vlift/kernels.hpp"
#include "vlift/parallel.hpp"
#include "vlift/problem.hpp"
#include "vlift/rng.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

struct SchemeMatrices {
  double dt = 0.0;
  /// s = 1/Δt
  double s = 0.0;
  /// s·â_N(s)
  double s_hat = 0.0;
  Matrix D;
  Eigen::FullPivLU<Matrix> D_lu;
  /// dᵢ = 1/(1+κᵢΔt)
  Vector damping;

  Vector solve(const Vector& rhs) const { return D_lu.solve(rhs); }
};

inline SchemeMatrices step_matrices(const LiftedSpace& space, double dt) {
  detail::require(dt > 0.0 && std::isfinite(dt), "time step must be positive");
  SchemeMatrices m;
  m.dt = dt;
  m.s = 1.0 / dt;
  m.s_hat = m.s * space.measure().laplace(m.s);
  m.D = m.s_hat * Matrix::Identity(space.dim(), space.dim()) - space.A();
  m.D_lu = Eigen::FullPivLU<Matrix>(m.D);
  if (!m.D_lu.isInvertible()) throw NumericalError("scheme matrix s·â(s)I − A is singular");
  m.damping = (1.0 + space.kappa().array() * dt).inverse().matrix();
  return m;
}

/// State increment produced by a noise vector w: Gᵢ(w) = dᵢ·D^{-1}g·w.
inline State noise_loading(const LiftedSpace& space, const SchemeMatrices& scheme, const Matrix& g,
                           const Vector& w) {
  const Vector base = scheme.solve(g * w);
  State out(space.dim(), space.nodes());
  for (int i = 0; i < space.nodes(); ++i) out.col(i) = scheme.damping[i] * base;
  return out;
}

/// Control law γ = π(t, x). Uncontrolled dynamics drop the r-channel entirely.
class Policy {
 public:
  enum class Kind { Uncontrolled, Constant, Feedback };
  using Law = std::function<Vector(double t, const State& x)>;

  static Policy uncontrolled() { return Policy(Kind::Uncontrolled, {}, "uncontrolled"); }

  static Policy constant(Vector gamma) {
    std::string label = "constant(";
    for (Eigen::Index i = 0; i < gamma.size(); ++i) label += (i ? "," : "") + std::to_string(gamma[i]);
    label += ")";
    return Policy(Kind::Constant, [gamma](double, const State&) { return gamma; }, std::move(label));
  }

  static Policy feedback(Law law, std::string label = "feedback") {
    return Policy(Kind::Feedback, std::move(law), std::move(label));
  }

  Kind kind() const noexcept { return kind_; }
  bool controlled() const noexcept { return kind_ != Kind::Uncontrolled; }
  const std::string& label() const noexcept { return label_; }

  Vector operator()(double t, const State& x) const {
    detail::require(controlled(), "uncontrolled policy has no control values");
    return law_(t, x);
  }

 private:
  Policy(Kind k, Law law, std::string label) : kind_(k), law_(std::move(law)), label_(std::move(label)) {}
  Kind kind_;
  Law law_;
  std::string label_;
};

inline int step_count(double T, double dt) {
  detail::require(dt > 0.0 && T >= 0.0, "time horizon and step must be non-negative/positive");
  const double ratio = T / dt;
  const double k = std::round(ratio);
  detail::require(std::abs(ratio - k) <= 1e-9 * std::max(1.0, ratio), "T/dt must be an integer step count");
  return static_cast<int>(k);
}

/// One step of the scheme for a single path. Holds immutable references only.
class Stepper {
 public:
  Stepper(const LiftedSpace& space, const ControlProblem& problem, double dt)
      : space_(space), problem_(problem), scheme_(step_matrices(space, dt)) {
    problem_.validate(space.dim());
    damped_weights_ = space.nu().cwiseProduct(space.kappa()).cwiseProduct(scheme_.damping);
  }

  const SchemeMatrices& scheme() const noexcept { return scheme_; }
  const LiftedSpace& space() const noexcept { return space_; }
  const ControlProblem& problem() const noexcept { return problem_; }

  /// Constraint forcing f(uⁿ) + g·r(Jxⁿ, γⁿ) + g·ΔWⁿ/Δt (r term omitted when gamma is null).
  Vector forcing(const State& x, const Vector& u, const Vector* gamma, const Vector& dw) const {
    Vector rhs = problem_.f.value(u);
    Vector drive = dw / scheme_.dt;
    if (gamma != nullptr) drive += problem_.r.value(output_map(space_, x), *gamma);
    rhs += problem_.g * drive;
    return rhs;
  }

  /// Advances (x, u) in place; returns the forcing used so callers can check the constraint.
  Vector advance(State& x, Vector& u, const Vector* gamma, const Vector& dw) const {
    const Vector force = forcing(x, u, gamma, dw);
    const Vector u_next = scheme_.solve(x * damped_weights_ + force);
    for (int i = 0; i < space_.nodes(); ++i) {
      x.col(i) = scheme_.damping[i] * (x.col(i) + scheme_.dt * u_next);
    }
    u = u_next;
    return force;
  }

 private:
  const LiftedSpace& space_;
  const ControlProblem& problem_;
  SchemeMatrices scheme_;
  Vector damped_weights_;
};

/// Simulated paths on a uniform grid t_k = kΔt, k = 0..K. Storage is flat and
/// path-major; accessors return Eigen maps.
class PathBundle {
 public:
  PathBundle() = default;
  PathBundle(int paths, int steps, double dt, int d, int n, int m, int q, bool store_states, bool controlled,
             std::uint64_t seed)
      : paths_(paths), steps_(steps), dt_(dt), d_(d), n_(n), m_(m), q_(q), seed_(seed),
        has_states_(store_states), controlled_(controlled) {
    outputs_.assign(static_cast<std::size_t>(paths) * (steps + 1) * d, 0.0);
    forcing_.assign(static_cast<std::size_t>(paths) * (steps + 1) * d, 0.0);
    dw_.assign(static_cast<std::size_t>(paths) * steps * m, 0.0);
    if (store_states) states_.assign(static_cast<std::size_t>(paths) * (steps + 1) * d * n, 0.0);
    if (controlled) controls_.assign(static_cast<std::size_t>(paths) * steps * q, 0.0);
  }

  int paths() const noexcept { return paths_; }
  int steps() const noexcept { return steps_; }
  double dt() const noexcept { return dt_; }
  double time(int k) const noexcept { return k * dt_; }
  int dim() const noexcept { return d_; }
  int nodes() const noexcept { return n_; }
  int noise_dim() const noexcept { return m_; }
  int control_dim() const noexcept { return q_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool has_states() const noexcept { return has_states_; }
  bool controlled() const noexcept { return controlled_; }
  bool empty() const noexcept { return paths_ == 0; }

  Eigen::Map<const State> state(int p, int k) const {
    detail::require(has_states_, "bundle was simulated without stored states");
    return Eigen::Map<const State>(&states_[idx(p, k) * d_ * n_], d_, n_);
  }
  Eigen::Map<State> state(int p, int k) { return Eigen::Map<State>(&states_[idx(p, k) * d_ * n_], d_, n_); }

  Eigen::Map<const Vector> output(int p, int k) const { return Eigen::Map<const Vector>(&outputs_[idx(p, k) * d_], d_); }
  Eigen::Map<Vector> output(int p, int k) { return Eigen::Map<Vector>(&outputs_[idx(p, k) * d_], d_); }

  /// Forcing used by the constraint solve that produced output(p, k); zero at k = 0.
  Eigen::Map<const Vector> forcing(int p, int k) const { return Eigen::Map<const Vector>(&forcing_[idx(p, k) * d_], d_); }
  Eigen::Map<Vector> forcing(int p, int k) { return Eigen::Map<Vector>(&forcing_[idx(p, k) * d_], d_); }

  Eigen::Map<const Vector> dw(int p, int k) const {
    return Eigen::Map<const Vector>(&dw_[(static_cast<std::size_t>(p) * steps_ + k) * m_], m_);
  }
  Eigen::Map<Vector> dw(int p, int k) { return Eigen::Map<Vector>(&dw_[(static_cast<std::size_t>(p) * steps_ + k) * m_], m_); }

  Eigen::Map<const Vector> control(int p, int k) const {
    detail::require(controlled_, "bundle has no stored controls");
    return Eigen::Map<const Vector>(&controls_[(static_cast<std::size_t>(p) * steps_ + k) * q_], q_);
  }
  Eigen::Map<Vector> control(int p, int k) {
    return Eigen::Map<Vector>(&controls_[(static_cast<std::size_t>(p) * steps_ + k) * q_], q_);
  }

  /// Brownian increments of one path as a vector of m-vectors.
  std::vector<Vector> increments(int p) const {
    std::vector<Vector> out(steps_);
    for (int k = 0; k < steps_; ++k) out[k] = dw(p, k);
    return out;
  }
  std::vector<Vector> controls(int p) const {
    std::vector<Vector> out(steps_);
    for (int k = 0; k < steps_; ++k) out[k] = control(p, k);
    return out;
  }
  std::vector<Vector> outputs(int p) const {
    std::vector<Vector> out(steps_ + 1);
    for (int k = 0; k <= steps_; ++k) out[k] = output(p, k);
    return out;
  }

  friend bool operator==(const PathBundle&, const PathBundle&) = default;

 private:
  std::size_t idx(int p, int k) const { return static_cast<std::size_t>(p) * (steps_ + 1) + k; }

  int paths_ = 0, steps_ = 0;
  double dt_ = 0.0;
  int d_ = 0, n_ = 0, m_ = 0, q_ = 0;
  std::uint64_t seed_ = 0;
  bool has_states_ = false, controlled_ = false;
  std::vector<double> states_, outputs_, forcing_, dw_, controls_;
};

struct SimulationOptions {
  int workers = 1;
  bool store_states = true;
  /// Global index of the first path, so disjoint batches draw disjoint streams.
  std::uint64_t first_path = 0;
  /// Overrides u⁰ = Jx₀ when restarting from a stored (x, u) pair.
  std::optional<Vector> initial_output;
  /// Tolerance on controls leaving U.
  double control_tolerance = 1e-9;
  /// When false the policy is evaluated and recorded but the r-channel is off,
  /// giving uncontrolled paths that carry the controls a policy would apply.
  bool apply_controls = true;
};

/// Runs one path and hands every step to `visit(k, x, u, gamma_or_null, dw)`
/// before the update (k = 0..K-1) and once more with k = K and null dw.
template <class Visitor>
void run_path(const Stepper& stepper, const Policy& policy, const State& x0, const Vector& u0, int steps,
              const PathNoise& noise, std::uint64_t path, double control_tolerance, Visitor&& visit,
              bool apply_controls = true) {
  const auto& problem = stepper.problem();
  const double dt = stepper.scheme().dt;
  State x = x0;
  Vector u = u0;
  Vector gamma;
  for (int k = 0; k < steps; ++k) {
    const Vector dw = noise.increment(path, k, problem.noise_dim(), dt);
    const Vector* gp = nullptr;
    if (policy.controlled()) {
      gamma = policy(k * dt, x);
      if (!problem.controls.contains(gamma, control_tolerance)) {
        throw InvalidArgument("policy '" + policy.label() + "' returned a control outside U");
      }
      gp = &gamma;
    }
    visit(k, x, u, gp, &dw);
    stepper.advance(x, u, apply_controls ? gp : nullptr, dw);
  }
  visit(steps, x, u, static_cast<const Vector*>(nullptr), static_cast<const Vector*>(nullptr));
}

inline PathBundle simulate(const LiftedSpace& space, const ControlProblem& problem, const Policy& policy,
                           const State& x0, double T, double dt, int paths, std::uint64_t seed,
                           const SimulationOptions& opts = {}) {
  space.check_state(x0);
  detail::require(paths >= 0, "path count must be >= 0");
  const int steps = step_count(T, dt);
  const Stepper stepper(space, problem, dt);
  const PathNoise noise(seed);
  const Vector u0 = opts.initial_output.value_or(output_map(space, x0));
  detail::require(u0.size() == space.dim(), "initial output has the wrong dimension");

  PathBundle bundle(paths, steps, dt, space.dim(), space.nodes(), problem.noise_dim(), problem.control_dim(),
                    opts.store_states, policy.controlled(), seed);
  parallel_for(static_cast<std::size_t>(paths), opts.workers, [&](std::size_t pi) {
    const int p = static_cast<int>(pi);
    Vector prev_force = Vector::Zero(space.dim());
    run_path(stepper, policy, x0, u0, steps, noise, opts.first_path + pi, opts.control_tolerance,
             [&](int k, const State& x, const Vector& u, const Vector* gamma, const Vector* dw) {
               if (bundle.has_states()) bundle.state(p, k) = x;
               bundle.output(p, k) = u;
               if (k > 0) bundle.forcing(p, k) = prev_force;
               if (dw != nullptr) {
                 bundle.dw(p, k) = *dw;
                 if (gamma != nullptr) bundle.control(p, k) = *gamma;
                 prev_force = stepper.forcing(x, u, opts.apply_controls ? gamma : nullptr, *dw);
               }
             },
             opts.apply_controls);
  });
  return bundle;
}

/// Largest |uᵏ − (Σνᵢ·I − A)^{-1}(Σνᵢκᵢxᵢᵏ + forcingᵏ)| over the bundle; k = 0 uses the unforced map.
inline double output_consistency_error(const LiftedSpace& space, const PathBundle& bundle) {
  double worst = 0.0;
  for (int p = 0; p < bundle.paths(); ++p) {
    for (int k = 0; k <= bundle.steps(); ++k) {
      const State x = bundle.state(p, k);
      const Vector rebuilt = k == 0 ? output_map(space, x) : output_map(space, x, Vector(bundle.forcing(p, k)));
      worst = std::max(worst, (rebuilt - bundle.output(p, k)).lpNorm<Eigen::Infinity>());
    }
  }
  return worst;
}

/// Direct product-integration solve of the discretized convolution equation
///   [(a∗u)(tₙ) − (a∗u)(tₙ₋₁)]/Δt = Auⁿ + f(uⁿ⁻¹) + g·r(uⁿ⁻¹, γⁿ⁻¹) + g·ΔWⁿ⁻¹/Δt
/// with u piecewise constant on cells, exact cell integrals of a, and the
/// history contribution ∫_{-∞}^0 a(t−s)u₀(s)ds in closed form. Independent of
/// the lift; cost O(K²). Empty `controls` means the r-channel is off.
inline std::vector<Vector> oracle_solve(const KernelSpec& family, const Matrix& A, const ControlProblem& problem,
                                        const HistoryDatum& u0, std::span<const Vector> dw,
                                        std::span<const Vector> controls, double T, double dt) {
  const auto mu = exact_measure(family);
  detail::require(mu.has_value(), "oracle solver requires a discrete kernel");
  const int d = static_cast<int>(A.rows());
  problem.validate(d);
  detail::require(history_dim(u0) == d, "history dimension does not match H");
  const int steps = step_count(T, dt);
  detail::require(static_cast<int>(dw.size()) == steps, "noise sequence length must equal the step count");
  detail::require(controls.empty() || static_cast<int>(controls.size()) == steps,
                  "control sequence length must equal the step count");

  const std::size_t n_nodes = mu->size();
  // w_k = ∫_{kΔt}^{(k+1)Δt} a(τ)dτ
  std::vector<double> w(steps + 1, 0.0);
  std::vector<double> cell(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const double k = mu->node(i);
    cell[i] = k == 0.0 ? dt : -std::expm1(-k * dt) / k;
  }
  for (int k = 0; k <= steps; ++k) {
    for (std::size_t i = 0; i < n_nodes; ++i) w[k] += mu->weight(i) * std::exp(-mu->node(i) * k * dt) * cell[i];
  }
  std::vector<Vector> q(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) q[i] = lift_history_at(mu->node(i), u0);
  auto hist = [&](double t) {
    Vector h = Vector::Zero(d);
    for (std::size_t i = 0; i < n_nodes; ++i) h += mu->weight(i) * std::exp(-mu->node(i) * t) * q[i];
    return h;
  };

  Eigen::FullPivLU<Matrix> lu(w[0] / dt * Matrix::Identity(d, d) - A);
  if (!lu.isInvertible()) throw NumericalError("oracle step matrix is singular");

  std::vector<Vector> u(steps + 1);
  u[0] = history_value(u0, 0.0);
  for (int n = 1; n <= steps; ++n) {
    Vector rhs = problem.f.value(u[n - 1]);
    Vector drive = dw[n - 1] / dt;
    if (!controls.empty()) drive += problem.r.value(u[n - 1], controls[n - 1]);
    rhs += problem.g * drive;
    Vector memory = hist(n * dt) - hist((n - 1) * dt);
    for (int j = 1; j < n; ++j) memory += (w[n - j] - w[n - 1 - j]) * u[j];
    u[n] = lu.solve(rhs - memory / dt);
  }
  return u;
}

/// Algorithmic derivative of the scheme along path `p` in direction h, with
/// noise and controls held fixed. Returns zᵏ for k = 0..K.
inline std::vector<State> sensitivity(const LiftedSpace& space, const ControlProblem& problem,
                                      const PathBundle& bundle, int p, const State& h) {
  space.check_state(h);
  detail::require(p >= 0 && p < bundle.paths(), "path index out of range");
  detail::require(bundle.dim() == space.dim() && bundle.nodes() == space.nodes(), "bundle does not match space");
  const auto scheme = step_matrices(space, bundle.dt());
  const Vector damped = space.nu().cwiseProduct(space.kappa()).cwiseProduct(scheme.damping);
  std::vector<State> z(bundle.steps() + 1);
  z[0] = h;
  Vector uz = output_map(space, h);
  for (int k = 0; k < bundle.steps(); ++k) {
    const Vector uz_next = scheme.solve(z[k] * damped + problem.f.jacobian(bundle.output(p, k)) * uz);
    z[k + 1] = z[k];
    for (int i = 0; i < space.nodes(); ++i) z[k + 1].col(i) = scheme.damping[i] * (z[k].col(i) + bundle.dt() * uz_next);
    uz = uz_next;
  }
  return z;
}

/// Monte Carlo estimate of E sup_t ‖x(t)‖_η^p.
inline double moment_estimate(const PathBundle& bundle, const LiftedSpace& space, double eta, double p) {
  detail::require(!bundle.empty(), "moment estimate needs a non-empty bundle");
  detail::require(p >= 1.0, "moment order must be >= 1");
  double sum = 0.0;
  for (int path = 0; path < bundle.paths(); ++path) {
    double sup = 0.0;
    for (int k = 0; k <= bundle.steps(); ++k) sup = std::max(sup, interp_norm(space, eta, State(bundle.state(path, k))));
    sum += std::pow(sup, p);
  }
  return sum / bundle.paths();
}

/// One row per (path, t): path, t, u_1..u_d[, x_<node>_<component>...], then
/// config_hash and seed so every file identifies its run.
inline void write_paths_csv(std::ostream& os, const PathBundle& b, const std::string& config_hash,
                            bool include_states = false) {
  CsvWriter w(os);
  std::vector<std::string> header{"path", "t"};
  for (int c = 0; c < b.dim(); ++c) header.push_back("u" + std::to_string(c + 1));
  const bool states = include_states && b.has_states();
  if (states) {
    for (int i = 0; i < b.nodes(); ++i)
      for (int c = 0; c < b.dim(); ++c) header.push_back("x" + std::to_string(i + 1) + "_" + std::to_string(c + 1));
  }
  header.push_back("config_hash");
  header.push_back("seed");
  w.row(header);
  const std::string seed = std::to_string(b.seed());
  for (int p = 0; p < b.paths(); ++p) {
    for (int k = 0; k <= b.steps(); ++k) {
      std::vector<std::string> row{std::to_string(p), csv_number(b.time(k))};
      const auto u = b.output(p, k);
      for (int c = 0; c < b.dim(); ++c) row.push_back(csv_number(u[c]));
      if (states) {
        const auto x = b.state(p, k);
        for (int i = 0; i < b.nodes(); ++i)
          for (int c = 0; c < b.dim(); ++c) row.push_back(csv_number(x(c, i)));
      }
      row.push_back(config_hash);
      row.push_back(seed);
      w.row(row);
    }
  }
}

/// Terminal mean/variance of u and the mean of sup_t |u(t)| over paths.
inline nlohmann::json bundle_summary(const PathBundle& b) {
  nlohmann::json j{{"paths", b.paths()}, {"steps", b.steps()}, {"dt", b.dt()}, {"seed", b.seed()}};
  if (b.empty()) return j;
  Vector mean = Vector::Zero(b.dim()), sq = Vector::Zero(b.dim());
  double sup = 0.0;
  for (int p = 0; p < b.paths(); ++p) {
    const Vector u = b.output(p, b.steps());
    mean += u;
    sq += u.cwiseAbs2();
    double s = 0.0;
    for (int k = 0; k <= b.steps(); ++k) s = std::max(s, b.output(p, k).norm());
    sup += s;
  }
  mean /= b.paths();
  const Vector var = sq / b.paths() - mean.cwiseAbs2();
  j["terminal_mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
  j["terminal_variance"] = std::vector<double>(var.data(), var.data() + var.size());
  j["mean_sup_norm"] = sup / b.paths();
  return j;
}

}  // namespace vlift
