#pragma once

// Discounted costs, feedback synthesis from a BSDE solution, the fundamental
// relation J(x, γ) ≥ v(x), and the Girsanov change of measure between
// uncontrolled and controlled paths.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vlift/bsde.hpp"
#include "vlift/error.hpp"
#include "vlift/forward.hpp"
#include "vlift/hamiltonian.hpp"
#include "vlift/parallel.hpp"
#include "vlift/problem.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

enum class DiscountRule {
  /// e^{−λt_k}(1 − e^{−λΔt})/λ: the exact integral of e^{−λt} over each cell.
  Exact,
  /// Δt(1 + λΔt)^{−(k+1)}: the weights implied by the implicit backward recursion.
  Implicit,
};

struct CostReport {
  double J = 0.0;
  double std_error = 0.0;
  double tail_bound = 0.0;
  double horizon = 0.0;
  int paths = 0;
  std::string policy;
};

inline double discount_weight(DiscountRule rule, double lambda, double dt, int k) {
  if (rule == DiscountRule::Exact) return std::exp(-lambda * k * dt) * -std::expm1(-lambda * dt) / lambda;
  return dt * std::pow(1.0 + lambda * dt, -(k + 1));
}

inline double cost_tail_bound(DiscountRule rule, double ell_bound, double lambda, double T, double dt) {
  if (rule == DiscountRule::Exact) return ell_bound * std::exp(-lambda * T) / lambda;
  return ell_bound * std::pow(1.0 + lambda * dt, -step_count(T, dt)) / lambda;
}

/// Streams Σ_k w_k·ℓ(Jx_k, γ_k) per path without storing the paths. The
/// uncontrolled policy is priced at the centre of U.
inline CostReport evaluate_cost(const LiftedSpace& space, const ControlProblem& problem, const Policy& policy,
                                const State& x0, double T, double dt, int paths, std::uint64_t seed,
                                const SimulationOptions& opts = {}, DiscountRule rule = DiscountRule::Exact) {
  detail::require(paths >= 1, "cost evaluation needs at least one path");
  space.check_state(x0);
  const int steps = step_count(T, dt);
  const Stepper stepper(space, problem, dt);
  const PathNoise noise(seed);
  const Vector u0 = opts.initial_output.value_or(output_map(space, x0));
  const Vector centre = problem.controls.center();
  std::vector<double> weights(steps);
  for (int k = 0; k < steps; ++k) weights[k] = discount_weight(rule, problem.lambda, dt, k);

  std::vector<double> per_path(paths, 0.0);
  parallel_for(static_cast<std::size_t>(paths), opts.workers, [&](std::size_t pi) {
    double acc = 0.0;
    run_path(stepper, policy, x0, u0, steps, noise, opts.first_path + pi, opts.control_tolerance,
             [&](int k, const State& x, const Vector&, const Vector* gamma, const Vector* dw) {
               if (dw == nullptr) return;
               acc += weights[k] * problem.ell.value(output_map(space, x), gamma ? *gamma : centre);
             },
             opts.apply_controls);
    per_path[pi] = acc;
  });

  CostReport rep;
  rep.paths = paths;
  rep.horizon = T;
  rep.policy = policy.label();
  double mean = 0.0;
  for (double c : per_path) mean += c;
  mean /= paths;
  double var = 0.0;
  for (double c : per_path) var += (c - mean) * (c - mean);
  rep.J = mean;
  rep.std_error = paths > 1 ? std::sqrt(var / (paths - 1) / paths) : 0.0;
  rep.tail_bound = cost_tail_bound(rule, problem.ell.bound, problem.lambda, T, dt);
  return rep;
}

/// Slice used by the feedback at time t: the earliest slice at or after t,
/// capped at n − 5/λ to stay out of the terminal layer.
inline int feedback_slice(const BsdeSolution& sol, double t) {
  const double dt = sol.config.dt;
  const int cap = std::max(0, std::min(sol.steps() - 1,
                                       static_cast<int>(std::floor((sol.config.horizon - 5.0 / sol.lambda) / dt + 1e-9))));
  const int k = std::max(0, static_cast<int>(std::ceil(t / dt - 1e-9)));
  return std::min(k, cap);
}

/// γ(t, x) = Γ(Jx, z_estimate(slice(t), x)). Keeps copies of the space and
/// problem and shares ownership of the solution.
inline Policy feedback_policy(const LiftedSpace& space, const ControlProblem& problem,
                              std::shared_ptr<const BsdeSolution> solution) {
  detail::require(solution != nullptr && solution->steps() > 0, "feedback needs a trained solution");
  auto sp = std::make_shared<const LiftedSpace>(space);
  auto pr = std::make_shared<const ControlProblem>(problem);
  return Policy::feedback(
      [sp, pr, solution](double t, const State& x) {
        const int k = feedback_slice(*solution, t);
        return gamma_select(*pr, output_map(*sp, x), z_estimate(*sp, *solution, k, x));
      },
      "feedback");
}

inline PathBundle closed_loop(const LiftedSpace& space, const ControlProblem& problem,
                              std::shared_ptr<const BsdeSolution> solution, const State& x0, double T, double dt,
                              int paths, std::uint64_t seed, const SimulationOptions& opts = {}) {
  return simulate(space, problem, feedback_policy(space, problem, std::move(solution)), x0, T, dt, paths, seed, opts);
}

// Fundamental relation --------------------------------------------------------------

struct CandidateResult {
  std::string name;
  CostReport cost;
  /// 3·sqrt(se_J² + se_v²) + truncation certificate + cost tail.
  double epsilon = 0.0;
  bool above_value = true;
};

struct FundamentalReport {
  double v = 0.0;
  double v_std_error = 0.0;
  double certificate = 0.0;
  std::vector<CandidateResult> candidates;
  /// index of the feedback candidate, −1 when absent
  int feedback_index = -1;
  double min_J = 0.0;
  bool value_inequality = true;
  bool feedback_optimal = true;
  bool pass = true;
};

struct FundamentalBudget {
  double T = 20.0;
  double dt = 0.05;
  int paths = 4096;
  int workers = 1;
};

inline std::uint64_t candidate_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Prices every candidate with the implicit discount rule (the weights the BSDE
/// recursion uses) and checks v ≤ J + ε for all and J_feedback ≤ min J + ε.
inline FundamentalReport fundamental_relation_check(const LiftedSpace& space, const ControlProblem& problem,
                                                    const BsdeSolution& solution, const State& x0,
                                                    const std::vector<std::pair<std::string, Policy>>& candidates,
                                                    const FundamentalBudget& budget, std::uint64_t seed) {
  detail::require(!candidates.empty(), "fundamental relation check needs candidates");
  FundamentalReport rep;
  rep.v = solution.y0;
  rep.v_std_error = solution.y0_std_error;
  rep.certificate = solution.tail_bound();
  SimulationOptions opts;
  opts.workers = budget.workers;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateResult c;
    c.name = candidates[i].first;
    c.cost = evaluate_cost(space, problem, candidates[i].second, x0, budget.T, budget.dt, budget.paths,
                           candidate_seed(seed, i), opts, DiscountRule::Implicit);
    c.epsilon = 3.0 * std::hypot(c.cost.std_error, rep.v_std_error) + rep.certificate + c.cost.tail_bound;
    c.above_value = rep.v <= c.cost.J + c.epsilon;
    if (!c.above_value) rep.value_inequality = false;
    if (candidates[i].second.kind() == Policy::Kind::Feedback) rep.feedback_index = static_cast<int>(i);
    rep.candidates.push_back(std::move(c));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rep.candidates.size(); ++i) {
    if (rep.candidates[i].cost.J < rep.candidates[best].cost.J) best = i;
  }
  rep.min_J = rep.candidates[best].cost.J;
  if (rep.feedback_index >= 0) {
    const auto& fb = rep.candidates[rep.feedback_index].cost;
    const auto& mn = rep.candidates[best].cost;
    const double eps = 3.0 * std::hypot(fb.std_error, mn.std_error) + fb.tail_bound + mn.tail_bound;
    rep.feedback_optimal = fb.J <= rep.min_J + eps;
  }
  rep.pass = rep.value_inequality && rep.feedback_optimal;
  return rep;
}

/// Constant policies on an evenly spaced grid of U (`per_axis` points per axis).
inline std::vector<std::pair<std::string, Policy>> constant_candidates(const ControlSet& U, int per_axis) {
  detail::require(per_axis >= 2, "need at least two constant candidates per axis");
  const int q = U.dim();
  std::vector<int> idx(q, 0);
  std::vector<std::pair<std::string, Policy>> out;
  while (true) {
    Vector g(q);
    for (int a = 0; a < q; ++a) g[a] = U.lo[a] + (U.hi[a] - U.lo[a]) * idx[a] / (per_axis - 1);
    auto pol = Policy::constant(g);
    out.emplace_back(pol.label(), pol);
    int a = q - 1;
    while (a >= 0 && ++idx[a] == per_axis) idx[a--] = 0;
    if (a < 0) break;
  }
  return out;
}

// Girsanov ----------------------------------------------------------------------

/// exp(Σ_k r_k·ΔW_k − ½Σ_k|r_k|²Δt), r_k = r(Jx_k, γ_k), from stored states,
/// increments and controls.
inline double girsanov_weight(const LiftedSpace& space, const ControlProblem& problem, const PathBundle& bundle,
                              int p) {
  detail::require(bundle.has_states(), "girsanov weight needs stored states");
  if (bundle.steps() > 0 && !bundle.controlled()) {
    // r is only defined with a control; an uncontrolled bundle has none.
    throw InvalidArgument("girsanov weight needs stored controls");
  }
  double log_w = 0.0;
  for (int k = 0; k < bundle.steps(); ++k) {
    const Vector r = problem.r.value(output_map(space, State(bundle.state(p, k))), Vector(bundle.control(p, k)));
    log_w += r.dot(bundle.dw(p, k)) - 0.5 * r.squaredNorm() * bundle.dt();
  }
  return std::exp(log_w);
}

struct GirsanovReport {
  double mean_weight = 0.0;
  double weight_std_error = 0.0;
  double reweighted = 0.0;
  double reweighted_std_error = 0.0;
  double controlled = 0.0;
  double controlled_std_error = 0.0;
  bool unit_mean = true;
  bool identity = true;
};

/// Φ(u-path) evaluated under the reweighted uncontrolled law and under the
/// controlled law. Both runs record controls; only the second applies them.
/// Paths are simulated in batches so memory stays bounded.
inline GirsanovReport girsanov_check(const LiftedSpace& space, const ControlProblem& problem, const Policy& policy,
                                     const State& x0, double T, double dt, int paths, std::uint64_t seed,
                                     const std::function<double(const PathBundle&, int)>& phi, int workers = 1,
                                     int batch = 4096) {
  detail::require(paths >= 1 && batch >= 1, "girsanov check needs paths and a positive batch size");
  auto stats = [paths](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= paths;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, paths > 1 ? std::sqrt(s / (paths - 1) / paths) : 0.0};
  };
  std::vector<double> w(paths), wphi(paths), cphi(paths);
  for (int first = 0; first < paths; first += batch) {
    const int n = std::min(batch, paths - first);
    SimulationOptions plain;
    plain.workers = workers;
    plain.apply_controls = false;
    plain.first_path = static_cast<std::uint64_t>(first);
    SimulationOptions applied = plain;
    applied.apply_controls = true;
    const auto base = simulate(space, problem, policy, x0, T, dt, n, seed, plain);
    const auto ctrl = simulate(space, problem, policy, x0, T, dt, n, candidate_seed(seed, 1), applied);
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t pi) {
      const int p = static_cast<int>(pi);
      w[first + p] = girsanov_weight(space, problem, base, p);
      wphi[first + p] = w[first + p] * phi(base, p);
      cphi[first + p] = phi(ctrl, p);
    });
  }
  GirsanovReport rep;
  std::tie(rep.mean_weight, rep.weight_std_error) = stats(w);
  std::tie(rep.reweighted, rep.reweighted_std_error) = stats(wphi);
  std::tie(rep.controlled, rep.controlled_std_error) = stats(cphi);
  rep.unit_mean = std::abs(rep.mean_weight - 1.0) <= 3.0 * rep.weight_std_error + 1e-12;
  rep.identity = std::abs(rep.reweighted - rep.controlled) <=
                 3.0 * std::hypot(rep.reweighted_std_error, rep.controlled_std_error) + 1e-12;
  return rep;
}

}  // namespace vlift
