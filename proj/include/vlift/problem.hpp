#pragma once

// Control problem data: drift f, noise loading g, control channel r, running
// cost ℓ, discount λ and the box of admissible controls. Coefficients are
// built from a small named registry so experiments are reproducible from text.

#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vlift/error.hpp"
#include "vlift/rng.hpp"

namespace vlift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct ControlSet {
  Vector lo;
  Vector hi;
  int resolution = 101;
  int refinements = 30;

  int dim() const noexcept { return static_cast<int>(lo.size()); }

  void validate() const {
    detail::require(lo.size() > 0 && lo.size() == hi.size(), "control box bounds differ in dimension");
    detail::require((lo.array() < hi.array()).all(), "control box requires lo < hi componentwise");
    detail::require(resolution >= 2, "control grid resolution must be >= 2");
    detail::require(refinements >= 0, "refinement count must be >= 0");
  }

  bool contains(const Vector& g, double tol = 1e-12) const {
    return g.size() == lo.size() && (g.array() >= lo.array() - tol).all() && (g.array() <= hi.array() + tol).all();
  }

  Vector center() const { return 0.5 * (lo + hi); }

  /// max over the box of |γ|
  double max_norm() const { return lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).norm(); }
};

inline ControlSet make_interval(double lo, double hi, int resolution = 101, int refinements = 30) {
  ControlSet u{Vector::Constant(1, lo), Vector::Constant(1, hi), resolution, refinements};
  u.validate();
  return u;
}

/// f: H → H with Jacobian, Lipschitz constant and sup bound (infinite when unbounded).
struct Drift {
  std::string name = "zero";
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
  double lipschitz = 0.0;
  double bound = 0.0;
};

/// r: H × U → R^m, bounded.
struct ControlChannel {
  std::string name = "zero";
  std::function<Vector(const Vector& u, const Vector& gamma)> value;
  double bound = 0.0;
  /// Lipschitz constant in γ.
  double lipschitz = 0.0;
};

/// ℓ: H × U → R, bounded.
struct RunningCost {
  std::string name = "zero";
  std::function<double(const Vector& u, const Vector& gamma)> value;
  double bound = 0.0;
};

struct ControlProblem {
  Drift f;
  Matrix g;  // d × m
  ControlChannel r;
  RunningCost ell;
  double lambda = 1.0;
  ControlSet controls;
  /// Optional exact argmin of ℓ(u,γ) + z·r(u,γ) over U; the Hamiltonian falls
  /// back to grid search when empty.
  std::function<Vector(const Vector& u, const Vector& z)> exact_argmin;

  int dim() const noexcept { return static_cast<int>(g.rows()); }
  int noise_dim() const noexcept { return static_cast<int>(g.cols()); }
  int control_dim() const noexcept { return controls.dim(); }

  void validate(int d) const {
    detail::require(g.rows() == d && g.cols() > 0, "g must be a d×m matrix");
    detail::require(lambda > 0.0, "discount rate must be positive");
    detail::require(static_cast<bool>(f.value) && static_cast<bool>(f.jacobian), "drift is not set");
    detail::require(static_cast<bool>(r.value), "control channel is not set");
    detail::require(static_cast<bool>(ell.value), "running cost is not set");
    controls.validate();
  }
};

// Named registry -------------------------------------------------------------

struct NamedCall {
  std::string name;
  std::vector<double> args;
};

/// Parses "name" or "name(a, b, ...)".
inline NamedCall parse_call(const std::string& text) {
  NamedCall call;
  const auto open = text.find('(');
  auto trim = [](std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
  };
  if (open == std::string::npos) {
    call.name = trim(text);
    return call;
  }
  const auto close = text.rfind(')');
  if (close == std::string::npos || close < open || !trim(text.substr(close + 1)).empty()) {
    throw InvalidArgument("malformed coefficient expression '" + text + "'");
  }
  call.name = trim(text.substr(0, open));
  std::stringstream args(text.substr(open + 1, close - open - 1));
  std::string item;
  while (std::getline(args, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InvalidArgument("bad numeric argument '" + item + "' in '" + text + "'");
    call.args.push_back(v);
  }
  return call;
}

namespace detail {

inline void expect_args(const NamedCall& c, std::size_t lo, std::size_t hi) {
  if (c.args.size() < lo || c.args.size() > hi) {
    throw InvalidArgument("coefficient '" + c.name + "' takes " + std::to_string(lo) + ".." + std::to_string(hi) +
                          " arguments");
  }
}

}  // namespace detail

/// zero | constant(c) | linear(c) | saturating_ramp(a, b)
/// saturating_ramp is b·tanh(a·u/b) componentwise: slope a at 0, saturation ±b.
inline Drift make_drift(const std::string& expr, int d) {
  const auto c = parse_call(expr);
  Drift f;
  f.name = expr;
  if (c.name == "zero") {
    detail::expect_args(c, 0, 0);
    f.value = [d](const Vector&) { return Vector::Zero(d); };
    f.jacobian = [d](const Vector&) { return Matrix::Zero(d, d); };
  } else if (c.name == "constant") {
    detail::expect_args(c, 1, 1);
    const double v = c.args[0];
    f.value = [d, v](const Vector&) { return Vector::Constant(d, v); };
    f.jacobian = [d](const Vector&) { return Matrix::Zero(d, d); };
    f.bound = std::abs(v) * std::sqrt(static_cast<double>(d));
  } else if (c.name == "linear") {
    detail::expect_args(c, 1, 1);
    const double k = c.args[0];
    f.value = [k](const Vector& u) { return Vector(k * u); };
    f.jacobian = [d, k](const Vector&) { return Matrix(k * Matrix::Identity(d, d)); };
    f.lipschitz = std::abs(k);
    f.bound = k == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else if (c.name == "saturating_ramp") {
    detail::expect_args(c, 2, 2);
    const double a = c.args[0], b = c.args[1];
    detail::require(b > 0.0, "saturating_ramp requires b > 0");
    f.value = [a, b](const Vector& u) { return Vector((a * u.array() / b).tanh() * b); };
    f.jacobian = [a, b](const Vector& u) {
      const Eigen::ArrayXd th = (a * u.array() / b).tanh();
      return Matrix((a * (1.0 - th.square())).matrix().asDiagonal());
    };
    f.lipschitz = std::abs(a);
    f.bound = b * std::sqrt(static_cast<double>(d));
  } else {
    throw InvalidArgument("unknown drift '" + c.name + "'");
  }
  return f;
}

/// zero | control(k): r(u, γ) = k·γ (requires m = q)
inline ControlChannel make_channel(const std::string& expr, int m, const ControlSet& u) {
  const auto c = parse_call(expr);
  ControlChannel r;
  r.name = expr;
  if (c.name == "zero") {
    detail::expect_args(c, 0, 0);
    r.value = [m](const Vector&, const Vector&) { return Vector::Zero(m); };
  } else if (c.name == "control") {
    detail::expect_args(c, 0, 1);
    const double k = c.args.empty() ? 1.0 : c.args[0];
    detail::require(u.dim() == m, "control(k) channel needs as many controls as noise components");
    r.value = [k](const Vector&, const Vector& gamma) { return Vector(k * gamma); };
    r.bound = std::abs(k) * u.max_norm();
    r.lipschitz = std::abs(k);
  } else {
    throw InvalidArgument("unknown control channel '" + c.name + "'");
  }
  return r;
}

/// zero | constant(c) | bounded_quadratic(cap[, w[, target]])
/// bounded_quadratic: cap·|u−target|²/(cap + |u−target|²) + w·|γ|²/2.
inline RunningCost make_cost(const std::string& expr, const ControlSet& u) {
  const auto c = parse_call(expr);
  RunningCost ell;
  ell.name = expr;
  if (c.name == "zero") {
    detail::expect_args(c, 0, 0);
    ell.value = [](const Vector&, const Vector&) { return 0.0; };
  } else if (c.name == "constant") {
    detail::expect_args(c, 1, 1);
    const double v = c.args[0];
    ell.value = [v](const Vector&, const Vector&) { return v; };
    ell.bound = std::abs(v);
  } else if (c.name == "bounded_quadratic") {
    detail::expect_args(c, 1, 3);
    const double cap = c.args[0];
    const double w = c.args.size() > 1 ? c.args[1] : 1.0;
    const double target = c.args.size() > 2 ? c.args[2] : 0.0;
    detail::require(cap > 0.0 && w >= 0.0, "bounded_quadratic requires cap > 0 and w >= 0");
    ell.value = [cap, w, target](const Vector& x, const Vector& gamma) {
      const double q = (x.array() - target).matrix().squaredNorm();
      return cap * q / (cap + q) + 0.5 * w * gamma.squaredNorm();
    };
    const double gmax = u.max_norm();
    ell.bound = cap + 0.5 * w * gmax * gmax;
  } else {
    throw InvalidArgument("unknown running cost '" + c.name + "'");
  }
  return ell;
}

struct ConstantsReport {
  bool ok = true;
  double max_lipschitz_ratio = 0.0;
  double max_f = 0.0;
  double max_r = 0.0;
  double max_ell = 0.0;
  std::string failure;
};

/// Samples the declared constants of f, r, ℓ on random points (u ~ N(0, scale²I),
/// γ uniform in U) and reports whether every sample respects them.
inline ConstantsReport verify_constants(const ControlProblem& p, int samples = 2000, double scale = 3.0,
                                        std::uint64_t seed = 0x5eed) {
  const int d = p.dim(), q = p.control_dim();
  PathNoise noise(seed);
  ConstantsReport rep;
  const double slack = 1.0 + 1e-9;
  for (int s = 0; s < samples; ++s) {
    const Vector u = scale * noise.normals(s, 0, d);
    const Vector v = scale * noise.normals(s, 1, d);
    const Vector z = noise.normals(s, 2, q);
    Vector gamma(q);
    for (int i = 0; i < q; ++i) {
      const double t = 0.5 * (1.0 + std::erf(z[i] / std::sqrt(2.0)));
      gamma[i] = p.controls.lo[i] + t * (p.controls.hi[i] - p.controls.lo[i]);
    }
    const double du = (u - v).norm();
    if (du > 0.0) {
      rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, (p.f.value(u) - p.f.value(v)).norm() / du);
    }
    rep.max_f = std::max(rep.max_f, p.f.value(u).norm());
    rep.max_r = std::max(rep.max_r, p.r.value(u, gamma).norm());
    rep.max_ell = std::max(rep.max_ell, std::abs(p.ell.value(u, gamma)));
  }
  auto fail = [&](const std::string& why) {
    rep.ok = false;
    if (rep.failure.empty()) rep.failure = why;
  };
  if (rep.max_lipschitz_ratio > p.f.lipschitz * slack + 1e-12) fail("f exceeds its Lipschitz constant");
  if (rep.max_f > p.f.bound * slack + 1e-12) fail("f exceeds its bound");
  if (rep.max_r > p.r.bound * slack + 1e-12) fail("r exceeds its bound");
  if (rep.max_ell > p.ell.bound * slack + 1e-12) fail("l exceeds its bound");
  return rep;
}

}  // namespace vlift
