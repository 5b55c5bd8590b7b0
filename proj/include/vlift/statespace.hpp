#pragma once

// Finite Markovian lift of a Volterra equation with kernel a = Σνᵢe^{-κᵢt}.
// The state is the family xᵢ(t) = ∫_{-∞}^t e^{-κᵢ(t-s)}u(s)ds, stored as a
// d×N matrix whose column i is x(κᵢ) ∈ H = R^d.

#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vlift/error.hpp"
#include "vlift/kernels.hpp"

namespace vlift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Lifted state, d rows (components of H) × N columns (nodes).
using State = Eigen::MatrixXd;

class LiftedSpace {
 public:
  LiftedSpace(Matrix a, BernsteinMeasure measure) : a_(std::move(a)), measure_(std::move(measure)) {
    detail::require(a_.rows() > 0 && a_.rows() == a_.cols(), "A must be a non-empty square matrix");
    detail::require(a_.allFinite(), "A must be finite");
    const auto n = static_cast<Eigen::Index>(measure_.size());
    kappa_ = Vector(n);
    nu_ = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      kappa_[i] = measure_.node(i);
      nu_[i] = measure_.weight(i);
    }
    mass_ = measure_.total_mass();
    constraint_ = Eigen::FullPivLU<Matrix>(mass_ * Matrix::Identity(dim(), dim()) - a_);
    if (!constraint_.isInvertible()) {
      throw NumericalError("total mass lies in the spectrum of A; output map undefined");
    }
  }

  int dim() const noexcept { return static_cast<int>(a_.rows()); }
  int nodes() const noexcept { return static_cast<int>(measure_.size()); }
  const Matrix& A() const noexcept { return a_; }
  const BernsteinMeasure& measure() const noexcept { return measure_; }
  const Vector& kappa() const noexcept { return kappa_; }
  const Vector& nu() const noexcept { return nu_; }
  double total_mass() const noexcept { return mass_; }

  State zero_state() const { return State::Zero(dim(), nodes()); }

  /// Solves (Σνᵢ·I − A)y = rhs.
  Vector solve_constraint(const Vector& rhs) const { return constraint_.solve(rhs); }

  /// (Σνᵢ·I − A)^{-1}
  Matrix constraint_inverse() const { return constraint_.inverse(); }

  /// Σ νᵢκᵢxᵢ
  Vector weighted_kappa_sum(const State& x) const { return x * nu_.cwiseProduct(kappa_); }

  /// Σ νᵢxᵢ, the memory term ∫a(t-s)u(s)ds.
  Vector convolution_value(const State& x) const { return x * nu_; }

  void check_state(const State& x) const {
    detail::require(x.rows() == dim() && x.cols() == nodes(), "state has the wrong shape");
  }

 private:
  Matrix a_;
  BernsteinMeasure measure_;
  Vector kappa_;
  Vector nu_;
  double mass_ = 0.0;
  Eigen::FullPivLU<Matrix> constraint_;
};

/// u = Jx: the output determined by the constraint Σνᵢ(−κᵢxᵢ + u) = Au.
inline Vector output_map(const LiftedSpace& space, const State& x) {
  space.check_state(x);
  return space.solve_constraint(space.weighted_kappa_sum(x));
}

/// Output when the constraint carries a forcing term: Σνᵢ(−κᵢxᵢ + u) = Au + forcing.
inline Vector output_map(const LiftedSpace& space, const State& x, const Vector& forcing) {
  space.check_state(x);
  return space.solve_constraint(space.weighted_kappa_sum(x) + forcing);
}

/// (Bx)ᵢ = −κᵢxᵢ + Jx
inline State generator_apply(const LiftedSpace& space, const State& x) {
  const Vector u = output_map(space, x);
  State y = -x * space.kappa().asDiagonal();
  y.colwise() += u;
  return y;
}

/// Dense (N·d)×(N·d) matrix of B acting on the column-major vectorization of a state.
inline Matrix generator_matrix(const LiftedSpace& space) {
  const int d = space.dim(), n = space.nodes();
  // J as a d × (N·d) block row: J_j = (mI − A)^{-1} νⱼκⱼ.
  const Matrix inv = space.constraint_inverse();
  Matrix b = Matrix::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      b.block(i * d, j * d, d, d) = space.nu()[j] * space.kappa()[j] * inv;
    }
    b.block(i * d, i * d, d, d) -= space.kappa()[i] * Matrix::Identity(d, d);
  }
  return b;
}

struct ResolventResult {
  State y;
  /// R(sâ(s), A)·Σⱼνⱼκⱼxⱼ/(s+κⱼ), which equals J(R(s,B)x).
  Vector inner;
};

/// R(s,B)x through the two-stage formula: one d×d solve with sâ(s)I − A,
/// then per-node scaling [R(s,B)x]ᵢ = (xᵢ + inner)/(s + κᵢ).
inline ResolventResult resolvent_detail(const LiftedSpace& space, double s, const State& x) {
  space.check_state(x);
  detail::require(s > 0.0, "resolvent requires s > 0");
  const int d = space.dim();
  const double s_hat = s * space.measure().laplace(s);
  Eigen::FullPivLU<Matrix> lu(s_hat * Matrix::Identity(d, d) - space.A());
  if (!lu.isInvertible()) throw NumericalError("s lies outside the resolvent set: s·â(s)I − A is singular");
  Vector rhs = Vector::Zero(d);
  for (int j = 0; j < space.nodes(); ++j) {
    rhs += space.nu()[j] * space.kappa()[j] / (s + space.kappa()[j]) * x.col(j);
  }
  ResolventResult out;
  out.inner = lu.solve(rhs);
  out.y = x;
  out.y.colwise() += out.inner;
  for (int i = 0; i < space.nodes(); ++i) out.y.col(i) /= s + space.kappa()[i];
  return out;
}

inline State resolvent(const LiftedSpace& space, double s, const State& x) {
  return resolvent_detail(space, s, x).y;
}

/// Largest real part of the spectrum of B.
inline double spectral_bound(const LiftedSpace& space) {
  Eigen::EigenSolver<Matrix> es(generator_matrix(space), false);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solver failed for B");
  return es.eigenvalues().real().maxCoeff();
}

/// ‖x‖² = Σ(κᵢ+1)νᵢ|xᵢ|²
inline double state_norm(const LiftedSpace& space, const State& x) {
  space.check_state(x);
  double s = 0.0;
  for (int i = 0; i < space.nodes(); ++i) {
    s += (space.kappa()[i] + 1.0) * space.nu()[i] * x.col(i).squaredNorm();
  }
  return std::sqrt(s);
}

/// Power-weight surrogate of the interpolation norm: Σ(1+κᵢ)^{2ρ}(κᵢ+1)νᵢ|xᵢ|².
inline double interp_norm(const LiftedSpace& space, double rho, const State& x) {
  detail::require(rho >= 0.0 && rho <= 1.0, "interpolation exponent must lie in [0,1]");
  space.check_state(x);
  double s = 0.0;
  for (int i = 0; i < space.nodes(); ++i) {
    const double k1 = space.kappa()[i] + 1.0;
    s += std::pow(k1, 2.0 * rho) * k1 * space.nu()[i] * x.col(i).squaredNorm();
  }
  return std::sqrt(s);
}

// Histories u₀(t), t ≤ 0 -----------------------------------------------------

namespace history {

struct Zero {
  int dim = 1;
};

/// u₀(t) = c·e^{ωt}
struct ExponentialDecay {
  Vector c;
  double omega = 1.0;
};

/// u₀(t) = c on [−δ, 0], 0 before.
struct Step {
  Vector c;
  double delta = 1.0;
};

/// Piecewise-linear interpolation of samples at ascending times ending at 0;
/// zero before the first time.
struct Tabulated {
  std::vector<double> times;
  std::vector<Vector> values;
};

}  // namespace history

using HistoryDatum = std::variant<history::Zero, history::ExponentialDecay, history::Step, history::Tabulated>;

inline int history_dim(const HistoryDatum& h) {
  return std::visit(
      [](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::Zero>) {
          return v.dim;
        } else if constexpr (std::is_same_v<T, history::Tabulated>) {
          return v.values.empty() ? 0 : static_cast<int>(v.values.front().size());
        } else {
          return static_cast<int>(v.c.size());
        }
      },
      h);
}

inline void validate(const HistoryDatum& h) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::ExponentialDecay>) {
          detail::require(v.omega > 0.0, "exponential history requires omega > 0");
        } else if constexpr (std::is_same_v<T, history::Step>) {
          detail::require(v.delta > 0.0, "step history requires delta > 0");
        } else if constexpr (std::is_same_v<T, history::Tabulated>) {
          detail::require(v.times.size() >= 2 && v.times.size() == v.values.size(),
                          "tabulated history needs >= 2 matching samples");
          detail::require(v.times.back() == 0.0, "tabulated history must end at t = 0");
          for (std::size_t i = 1; i < v.times.size(); ++i) {
            detail::require(v.times[i] > v.times[i - 1], "tabulated times must be increasing");
            detail::require(v.values[i].size() == v.values[0].size(), "tabulated values differ in dimension");
          }
        }
      },
      h);
}

inline Vector history_value(const HistoryDatum& h, double t) {
  detail::require(t <= 0.0, "history is defined for t <= 0");
  return std::visit(
      [t](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::Zero>) {
          return Vector::Zero(v.dim);
        } else if constexpr (std::is_same_v<T, history::ExponentialDecay>) {
          return v.c * std::exp(v.omega * t);
        } else if constexpr (std::is_same_v<T, history::Step>) {
          return t >= -v.delta ? Vector(v.c) : Vector(Vector::Zero(v.c.size()));
        } else {
          if (t < v.times.front()) return Vector::Zero(v.values.front().size());
          std::size_t i = 1;
          while (v.times[i] < t) ++i;
          const double w = (t - v.times[i - 1]) / (v.times[i] - v.times[i - 1]);
          return (1.0 - w) * v.values[i - 1] + w * v.values[i];
        }
      },
      h);
}

/// Growth/regularity constants: |u₀(t)| ≤ M₁e^{ωt}, Lipschitz constant M₂ near 0.
struct HistoryBounds {
  double m1 = 0.0;
  double omega = 1.0;
  double m2 = 0.0;
};

inline HistoryBounds history_bounds(const HistoryDatum& h) {
  validate(h);
  return std::visit(
      [](const auto& v) -> HistoryBounds {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::Zero>) {
          return {0.0, 1.0, 0.0};
        } else if constexpr (std::is_same_v<T, history::ExponentialDecay>) {
          return {v.c.norm(), v.omega, v.c.norm() * v.omega};
        } else if constexpr (std::is_same_v<T, history::Step>) {
          return {v.c.norm() * std::exp(v.delta), 1.0, 0.0};
        } else {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < v.times.size(); ++i) {
            m1 = std::max(m1, v.values[i].norm() * std::exp(-v.times[i]));
            if (i > 0) {
              m2 = std::max(m2, (v.values[i] - v.values[i - 1]).norm() / (v.times[i] - v.times[i - 1]));
            }
          }
          return {m1, 1.0, m2};
        }
      },
      h);
}

namespace detail {

// Adaptive Simpson for a vector-valued integrand.
inline Vector simpson_adaptive(const std::function<Vector(double)>& f, double a, double b, const Vector& fa,
                               const Vector& fm, const Vector& fb, const Vector& whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const Vector flm = f(0.5 * (a + m));
  const Vector frm = f(0.5 * (m + b));
  const Vector left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const Vector right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const Vector delta = left + right - whole;
  if (delta.lpNorm<Eigen::Infinity>() <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) throw NumericalError("adaptive quadrature of the tabulated history did not converge");
  return simpson_adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline Vector integrate(const std::function<Vector(double)>& f, double a, double b, double tol) {
  const Vector fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const Vector whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_adaptive(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace detail

/// (Qu₀)(κ) = ∫_{-∞}^0 e^{κs}u₀(s)ds at a single node.
inline Vector lift_history_at(double kappa, const HistoryDatum& h) {
  validate(h);
  return std::visit(
      [kappa](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::Zero>) {
          return Vector::Zero(v.dim);
        } else if constexpr (std::is_same_v<T, history::ExponentialDecay>) {
          return v.c / (kappa + v.omega);
        } else if constexpr (std::is_same_v<T, history::Step>) {
          const double factor = kappa == 0.0 ? v.delta : -std::expm1(-kappa * v.delta) / kappa;
          return v.c * factor;
        } else {
          const HistoryDatum whole = v;
          Vector sum = Vector::Zero(v.values.front().size());
          for (std::size_t i = 1; i < v.times.size(); ++i) {
            const double a = v.times[i - 1], b = v.times[i];
            auto f = [&](double s) -> Vector { return std::exp(kappa * s) * history_value(whole, s); };
            const double scale = std::max(1e-300, v.values[i - 1].norm() + v.values[i].norm()) * (b - a);
            sum += detail::integrate(f, a, b, 1e-14 * scale);
          }
          return sum;
        }
      },
      h);
}

/// x₀ = Qu₀
inline State lift_history(const LiftedSpace& space, const HistoryDatum& h) {
  detail::require(history_dim(h) == space.dim(), "history dimension does not match H");
  State x(space.dim(), space.nodes());
  for (int i = 0; i < space.nodes(); ++i) x.col(i) = lift_history_at(space.kappa()[i], h);
  return x;
}

/// ⟨u,v⟩ = ∫∫[a(t+s) − a'(t+s)]⟨u(−s),v(−t)⟩ ds dt. For a = Σνᵢe^{-κᵢt} the
/// weight is Σνᵢ(1+κᵢ)e^{-κᵢ(t+s)}, which factorizes into Σνᵢ(1+κᵢ)⟨Qu(κᵢ),Qv(κᵢ)⟩.
inline double history_inner(const KernelSpec& family, const HistoryDatum& u, const HistoryDatum& v) {
  const auto mu = exact_measure(family);
  detail::require(mu.has_value(), "history inner product requires a discrete kernel");
  detail::require(history_dim(u) == history_dim(v), "histories differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < mu->size(); ++i) {
    const double k = mu->node(i);
    s += mu->weight(i) * (1.0 + k) * lift_history_at(k, u).dot(lift_history_at(k, v));
  }
  return s;
}

struct ExponentPair {
  double eta = 0.0;
  double theta = 0.0;
};

/// Midpoint-slack choice η = (1−α)/2 + δ, θ = (1+α)/2 − δ with δ = (α − 1/2)/4.
/// Feasible (θ − η > 1/2) only for α > 1/2.
inline ExponentPair select_exponents(double alpha) {
  detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]");
  if (alpha <= 0.5) throw InvalidArgument("exponent constraints are infeasible for alpha <= 1/2");
  const double slack = (alpha - 0.5) / 4.0;
  return {(1.0 - alpha) / 2.0 + slack, (1.0 + alpha) / 2.0 - slack};
}

// JSON ----------------------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw ConfigError(what + ": expected a row-major matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (j[r].size() != static_cast<std::size_t>(cols)) throw ConfigError(what + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, int dim, const std::string& what) {
  if (j.is_number()) return Vector::Constant(dim, j.get<double>());
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != dim) throw ConfigError(what + ": expected " + std::to_string(dim) + " components");
  return Eigen::Map<const Vector>(v.data(), dim);
}

inline nlohmann::json space_to_json(const LiftedSpace& space) {
  return {{"A", matrix_to_json(space.A())},
          {"nodes", space.measure().nodes()},
          {"weights", space.measure().weights()}};
}

inline LiftedSpace space_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"A", "nodes", "weights"}, "space");
  try {
    return LiftedSpace(matrix_from_json(j.at("A"), "space.A"),
                       BernsteinMeasure(j.at("nodes").get<std::vector<double>>(),
                                        j.at("weights").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("space: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
}

inline nlohmann::json history_to_json(const HistoryDatum& h) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return std::visit(
      [&](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, history::Zero>) {
          return {{"variant", "zero"}, {"dim", v.dim}};
        } else if constexpr (std::is_same_v<T, history::ExponentialDecay>) {
          return {{"variant", "exponential_decay"}, {"c", vec(v.c)}, {"omega", v.omega}};
        } else if constexpr (std::is_same_v<T, history::Step>) {
          return {{"variant", "step"}, {"c", vec(v.c)}, {"delta", v.delta}};
        } else {
          nlohmann::json values = nlohmann::json::array();
          for (const auto& x : v.values) values.push_back(vec(x));
          return {{"variant", "tabulated"}, {"times", v.times}, {"values", values}};
        }
      },
      h);
}

inline HistoryDatum history_from_json(const nlohmann::json& j, int dim) {
  if (!j.is_object() || !j.contains("variant")) throw ConfigError("history: missing 'variant'");
  const auto variant = j.at("variant").get<std::string>();
  HistoryDatum h;
  try {
    if (variant == "zero") {
      detail::reject_unknown(j, {"variant", "dim"}, "history");
      h = history::Zero{j.value("dim", dim)};
    } else if (variant == "exponential_decay") {
      detail::reject_unknown(j, {"variant", "c", "omega"}, "history");
      h = history::ExponentialDecay{vector_from_json(j.at("c"), dim, "history.c"), j.at("omega").get<double>()};
    } else if (variant == "step") {
      detail::reject_unknown(j, {"variant", "c", "delta"}, "history");
      h = history::Step{vector_from_json(j.at("c"), dim, "history.c"), j.at("delta").get<double>()};
    } else if (variant == "tabulated") {
      detail::reject_unknown(j, {"variant", "times", "values"}, "history");
      history::Tabulated t;
      t.times = j.at("times").get<std::vector<double>>();
      for (const auto& v : j.at("values")) t.values.push_back(vector_from_json(v, dim, "history.values"));
      h = std::move(t);
    } else {
      throw ConfigError("history: unknown variant '" + variant + "'");
    }
    validate(h);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("history: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("history: ") + e.what());
  }
  if (history_dim(h) != dim) throw ConfigError("history: dimension does not match H");
  return h;
}

}  // namespace vlift
