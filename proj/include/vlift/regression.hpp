#pragma once

// Least-squares projection onto polynomials of standardized state features.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vlift/error.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

enum class FeatureSet {
  /// u = Jx
  Output,
  /// u = Jx and m = Σνᵢxᵢ
  OutputConvolution,
  /// u = Jx and every node xᵢ
  Raw,
};

inline std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::Output: return "output";
    case FeatureSet::OutputConvolution: return "output_convolution";
    case FeatureSet::Raw: return "raw";
  }
  return "?";
}

inline FeatureSet feature_set_from_string(const std::string& s) {
  if (s == "output") return FeatureSet::Output;
  if (s == "output_convolution") return FeatureSet::OutputConvolution;
  if (s == "raw") return FeatureSet::Raw;
  throw InvalidArgument("unknown feature set '" + s + "'");
}

inline int feature_count(FeatureSet f, int d, int n) {
  switch (f) {
    case FeatureSet::Output: return d;
    case FeatureSet::OutputConvolution: return 2 * d;
    case FeatureSet::Raw: return d + d * n;
  }
  return 0;
}

/// Feature vector of a state; the first d entries are always the observation Jx.
inline Vector state_features(const LiftedSpace& space, FeatureSet set, const State& x) {
  const int d = space.dim();
  Vector out(feature_count(set, d, space.nodes()));
  out.head(d) = output_map(space, x);
  if (set == FeatureSet::OutputConvolution) {
    out.segment(d, d) = space.convolution_value(x);
  } else if (set == FeatureSet::Raw) {
    out.tail(d * space.nodes()) = x.reshaped();
  }
  return out;
}

/// Monomials of total degree ≤ p in the active (non-constant) features, graded
/// then lexicographic. With no active feature the basis is the constant alone.
class PolynomialBasis {
 public:
  PolynomialBasis() = default;

  PolynomialBasis(Vector mean, Vector scale, std::vector<int> active, int degree)
      : mean_(std::move(mean)), scale_(std::move(scale)), active_(std::move(active)), degree_(degree) {
    detail::require(degree >= 0, "basis degree must be >= 0");
    std::vector<int> e(active_.size(), 0);
    for (int total = 0; total <= (active_.empty() ? 0 : degree); ++total) enumerate(e, 0, total);
  }

  /// Standardizes over the rows of `features` (paths × F). Features whose spread
  /// is below `tiny` relative to their magnitude are dropped, and so are features
  /// that are (almost) linear combinations of earlier kept ones: 1 − R² ≤
  /// `collinear`. Early slices need this since every feature is then a linear
  /// function of the same few increments.
  static PolynomialBasis fit(const Matrix& features, int degree, double tiny = 1e-10, double collinear = 1e-8) {
    const int F = static_cast<int>(features.cols());
    const double n = static_cast<double>(features.rows());
    Vector mean(F), scale(F);
    std::vector<int> spread;
    for (int j = 0; j < F; ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < features.rows(); ++i) s += features(i, j);
      mean[j] = s / n;
      double v = 0.0;
      for (Eigen::Index i = 0; i < features.rows(); ++i) v += (features(i, j) - mean[j]) * (features(i, j) - mean[j]);
      scale[j] = std::sqrt(v / n);
      if (scale[j] > tiny * std::max(1.0, std::abs(mean[j]))) {
        spread.push_back(j);
      } else {
        scale[j] = 1.0;
      }
    }
    // Correlations among the spread features, then greedy selection in index order.
    const int S = static_cast<int>(spread.size());
    Matrix corr = Matrix::Zero(S, S);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      Vector z(S);
      for (int a = 0; a < S; ++a) z[a] = (features(i, spread[a]) - mean[spread[a]]) / scale[spread[a]];
      corr.selfadjointView<Eigen::Lower>().rankUpdate(z);
    }
    corr = corr.selfadjointView<Eigen::Lower>();
    corr /= n;
    std::vector<int> kept, active;
    for (int a = 0; a < S; ++a) {
      double residual = corr(a, a);
      if (!kept.empty()) {
        const int k = static_cast<int>(kept.size());
        Matrix cs(k, k);
        Vector c(k);
        for (int i = 0; i < k; ++i) {
          c[i] = corr(kept[i], a);
          for (int j = 0; j < k; ++j) cs(i, j) = corr(kept[i], kept[j]);
        }
        residual -= c.dot(cs.ldlt().solve(c));
      }
      if (residual > collinear) {
        kept.push_back(a);
        active.push_back(spread[a]);
      }
    }
    return PolynomialBasis(std::move(mean), std::move(scale), std::move(active), degree);
  }

  int size() const noexcept { return static_cast<int>(exponents_.size()); }
  int degree() const noexcept { return degree_; }
  const std::vector<int>& active() const noexcept { return active_; }
  const std::vector<std::vector<int>>& exponents() const noexcept { return exponents_; }
  const Vector& mean() const noexcept { return mean_; }
  const Vector& scale() const noexcept { return scale_; }

  template <class Derived>
  Vector eval(const Eigen::MatrixBase<Derived>& features) const {
    const int a = static_cast<int>(active_.size());
    Vector z(a);
    for (int i = 0; i < a; ++i) z[i] = (features[active_[i]] - mean_[active_[i]]) / scale_[active_[i]];
    Vector out(size());
    for (int b = 0; b < size(); ++b) {
      double v = 1.0;
      for (int i = 0; i < a; ++i) {
        for (int p = 0; p < exponents_[b][i]; ++p) v *= z[i];
      }
      out[b] = v;
    }
    return out;
  }

  nlohmann::json to_json() const {
    return {{"degree", degree_},
            {"active", active_},
            {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"scale", std::vector<double>(scale_.data(), scale_.data() + scale_.size())}};
  }

  static PolynomialBasis from_json(const nlohmann::json& j) {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    return PolynomialBasis(Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                           Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size())),
                           j.at("active").get<std::vector<int>>(), j.at("degree").get<int>());
  }

 private:
  void enumerate(std::vector<int>& e, std::size_t pos, int remaining) {
    if (pos + 1 >= e.size()) {
      if (!e.empty()) e.back() = remaining;
      exponents_.push_back(e);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      e[pos] = k;
      enumerate(e, pos + 1, remaining - k);
    }
    e[pos] = 0;
  }

  Vector mean_, scale_;
  std::vector<int> active_;
  int degree_ = 0;
  std::vector<std::vector<int>> exponents_;
};

/// Normal equations ΦᵀΦ c = Φᵀy for several right-hand sides sharing Φ.
struct LeastSquaresFit {
  Matrix coefficients;  // L × targets
  Matrix gram_inverse;  // (ΦᵀΦ)^{-1}
  Vector sigma;         // residual standard deviation per target
  double condition = 1.0;

  /// σ·sqrt(φᵀ(ΦᵀΦ)^{-1}φ) per target.
  Vector standard_error(const Vector& phi) const {
    const double q = std::sqrt(std::max(0.0, phi.dot(gram_inverse * phi)));
    return sigma * q;
  }
};

/// Rows are accumulated in index order so the result does not depend on how
/// `phi` and `targets` were produced.
inline LeastSquaresFit least_squares(const Matrix& phi, const Matrix& targets, double max_condition = 1e12) {
  const Eigen::Index n = phi.rows(), L = phi.cols();
  detail::require(targets.rows() == n, "regression targets do not match design rows");
  if (n < L) throw InvalidArgument("regression needs at least as many paths as basis functions");
  Matrix gram = Matrix::Zero(L, L);
  Matrix rhs = Matrix::Zero(L, targets.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.row(i).transpose());
    rhs.noalias() += phi.row(i).transpose() * targets.row(i);
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  LeastSquaresFit fit;
  fit.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(fit.condition <= max_condition)) {
    throw NumericalError("regression normal equations are rank deficient", fit.condition);
  }
  fit.gram_inverse = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  fit.coefficients = fit.gram_inverse * rhs;
  fit.sigma = Vector::Zero(targets.cols());
  const double dof = static_cast<double>(std::max<Eigen::Index>(n - L, 1));
  for (Eigen::Index t = 0; t < targets.cols(); ++t) {
    double rss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = targets(i, t) - phi.row(i).dot(fit.coefficients.col(t));
      rss += r * r;
    }
    fit.sigma[t] = std::sqrt(rss / dof);
  }
  return fit;
}

}  // namespace vlift
