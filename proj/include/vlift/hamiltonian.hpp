#pragma once

// Hamiltonian ψ(u, z) = inf_{γ∈U} ℓ(u,γ) + z·r(u,γ) and its minimizer Γ.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vlift/error.hpp"
#include "vlift/problem.hpp"

namespace vlift {

struct HamiltonianEval {
  double value = 0.0;
  Vector minimizer;
  /// Improvement of the refined value over the best grid value (≥ 0).
  double gap = 0.0;
};

inline double hamiltonian_objective(const ControlProblem& p, const Vector& u, const Vector& z, const Vector& gamma) {
  return p.ell.value(u, gamma) + z.dot(p.r.value(u, gamma));
}

namespace detail {

// Grid search in lexicographic order (first axis most significant); a point
// replaces the incumbent only when strictly better, so ties keep the smallest.
inline HamiltonianEval grid_minimize(const ControlProblem& p, const Vector& u, const Vector& z) {
  const auto& U = p.controls;
  const int q = U.dim();
  const int res = U.resolution;
  std::vector<int> idx(q, 0);
  Vector gamma(q), best_gamma(q);
  double best = std::numeric_limits<double>::infinity();
  auto at = [&](int axis, int i) { return U.lo[axis] + (U.hi[axis] - U.lo[axis]) * i / (res - 1); };
  while (true) {
    for (int a = 0; a < q; ++a) gamma[a] = at(a, idx[a]);
    const double v = hamiltonian_objective(p, u, z, gamma);
    if (v < best) {
      best = v;
      best_gamma = gamma;
    }
    int a = q - 1;
    while (a >= 0 && ++idx[a] == res) idx[a--] = 0;
    if (a < 0) break;
  }

  const double grid_best = best;
  constexpr double kInvPhi = 0.6180339887498949;
  for (int a = 0; a < q; ++a) {
    const double h = (U.hi[a] - U.lo[a]) / (res - 1);
    double lo = std::max(U.lo[a], best_gamma[a] - h);
    double hi = std::min(U.hi[a], best_gamma[a] + h);
    Vector trial = best_gamma;
    auto eval = [&](double x) {
      trial[a] = x;
      return hamiltonian_objective(p, u, z, trial);
    };
    double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
    double f1 = eval(x1), f2 = eval(x2);
    for (int it = 0; it < U.refinements; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kInvPhi * (hi - lo);
        f1 = eval(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kInvPhi * (hi - lo);
        f2 = eval(x2);
      }
    }
    const double xm = f1 <= f2 ? x1 : x2;
    const double fm = eval(xm);
    if (fm < best) {
      best = fm;
      best_gamma[a] = xm;
    }
  }
  return {best, best_gamma, grid_best - best};
}

}  // namespace detail

/// ψ(u, z) with u = Jx. Uses the problem's exact argmin when one is attached.
inline HamiltonianEval psi(const ControlProblem& p, const Vector& u, const Vector& z) {
  detail::require(u.allFinite() && z.allFinite(), "psi requires finite arguments");
  detail::require(z.size() == p.noise_dim(), "z must have the noise dimension");
  if (p.exact_argmin) {
    Vector g = p.exact_argmin(u, z);
    const double v = hamiltonian_objective(p, u, z, g);
    return {v, std::move(g), 0.0};
  }
  return detail::grid_minimize(p, u, z);
}

inline HamiltonianEval psi_grid(const ControlProblem& p, const Vector& u, const Vector& z) {
  return detail::grid_minimize(p, u, z);
}

inline Vector gamma_select(const ControlProblem& p, const Vector& u, const Vector& z) {
  return psi(p, u, z).minimizer;
}

/// Closed-form minimizer for registry pairs: ℓ = ℓ₀(u) + (w/2)|γ|² (w ≥ 0) and
/// r ∈ {zero, control(k)}. Componentwise: clamp(−k·z/w) for w > 0; for w = 0 the
/// objective is linear in γ and the lexicographic tie rule picks lo on flat axes.
inline std::function<Vector(const Vector&, const Vector&)> closed_form_argmin(const ControlProblem& p) {
  const auto cost = parse_call(p.ell.name);
  const auto chan = parse_call(p.r.name);
  double w = 0.0;
  if (cost.name == "bounded_quadratic") {
    w = cost.args.size() > 1 ? cost.args[1] : 1.0;
  } else if (cost.name != "zero" && cost.name != "constant") {
    return {};
  }
  double k = 0.0;
  if (chan.name == "control") {
    k = chan.args.empty() ? 1.0 : chan.args[0];
  } else if (chan.name != "zero") {
    return {};
  }
  const Vector lo = p.controls.lo, hi = p.controls.hi;
  return [w, k, lo, hi](const Vector&, const Vector& z) {
    const int q = static_cast<int>(lo.size());
    Vector g(q);
    for (int i = 0; i < q; ++i) {
      const double slope = k == 0.0 ? 0.0 : k * z[i];
      if (w > 0.0) {
        g[i] = std::clamp(-slope / w, lo[i], hi[i]);
      } else {
        g[i] = slope < 0.0 ? hi[i] : lo[i];
      }
    }
    return g;
  };
}

struct PsiConstants {
  double K = 0.0;
  double M = 0.0;
  /// Theoretical caps: K ≤ C_r, M ≤ ‖ℓ‖∞.
  double K_bound = 0.0;
  double M_bound = 0.0;
  bool certified = true;
};

/// K from sampled z-differences at every state, M = max |ψ(u, 0)|.
inline PsiConstants estimate_psi_constants(const ControlProblem& p, std::span<const Vector> us,
                                           std::span<const Vector> zs) {
  detail::require(!us.empty() && !zs.empty(), "psi constants need non-empty samples");
  PsiConstants c;
  c.K_bound = p.r.bound;
  c.M_bound = p.ell.bound;
  const Vector zero = Vector::Zero(p.noise_dim());
  for (const auto& u : us) {
    const double p0 = psi(p, u, zero).value;
    c.M = std::max(c.M, std::abs(p0));
    double prev = p0;
    const Vector* prev_z = &zero;
    for (const auto& z : zs) {
      const double v = psi(p, u, z).value;
      const double dz = (z - *prev_z).norm();
      if (dz > 0.0) c.K = std::max(c.K, std::abs(v - prev) / dz);
      const double d0 = z.norm();
      if (d0 > 0.0) c.K = std::max(c.K, std::abs(v - p0) / d0);
      prev = v;
      prev_z = &z;
    }
  }
  const double slack = 1.0 + 1e-9;
  c.certified = c.K <= c.K_bound * slack + 1e-12 && c.M <= c.M_bound * slack + 1e-12;
  return c;
}

}  // namespace vlift
