#pragma once

// Least-squares VAR(p) and AR(p) fits that skip any regression row touching
// an excluded date, plus the one-step predictions used to impute outliers.

#include "odfm/common.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace odfm {

using DateSet = std::set<Eigen::Index>;  // 1-based dates

/// y_t = c + sum_k Phi_k y_{t-k} + e_t.
struct VarFit {
  Vector intercept;
  std::vector<Matrix> phi;  // Phi_1 .. Phi_p
  Matrix residual_cov;
  Eigen::Index rows = 0;    // regression rows used

  int order() const { return static_cast<int>(phi.size()); }

  /// Prediction of y_t from the p preceding columns ending at column `last`
  /// (0-based), i.e. y_{last+1} given y_last, y_{last-1}, ...
  Vector predict_after(const Matrix& y, Eigen::Index last) const {
    Vector out = intercept;
    for (int k = 1; k <= order(); ++k) out += phi[static_cast<std::size_t>(k - 1)] * y.col(last - k + 1);
    return out;
  }
};

namespace detail {

inline bool row_clean(Eigen::Index t, int p, const DateSet& excluded) {
  for (Eigen::Index s = t - p; s <= t; ++s)
    if (excluded.count(s)) return false;
  return true;
}

}  // namespace detail

/// Fit on an N x T panel; target rows are dates t = p+1..T such that none of
/// t, t-1, ..., t-p is excluded.
inline VarFit fit_var(const Matrix& y, int p, const DateSet& excluded = {}) {
  const Eigen::Index n = y.rows();
  const Eigen::Index t = y.cols();
  if (p < 1) throw ArgumentError("fit_var: order must be at least 1");
  std::vector<Eigen::Index> targets;
  for (Eigen::Index d = p + 1; d <= t; ++d)
    if (detail::row_clean(d, p, excluded)) targets.push_back(d);
  const Eigen::Index m = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index cols = 1 + n * p;
  if (m < cols + 1)
    throw ArgumentError("insufficient history for a VAR(" + std::to_string(p) + ") fit: " + std::to_string(m) +
                        " usable rows for " + std::to_string(cols) + " coefficients per equation");
  Matrix z(m, cols);
  Matrix yy(m, n);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index d = targets[static_cast<std::size_t>(r)];
    z(r, 0) = 1.0;
    for (int k = 1; k <= p; ++k) z.row(r).segment(1 + (k - 1) * n, n) = y.col(d - 1 - k).transpose();
    yy.row(r) = y.col(d - 1).transpose();
  }
  const Matrix coef = z.colPivHouseholderQr().solve(yy);  // cols x n
  VarFit f;
  f.rows = m;
  f.intercept = coef.row(0).transpose();
  for (int k = 1; k <= p; ++k) f.phi.push_back(coef.block(1 + (k - 1) * n, 0, n, n).transpose());
  const Matrix resid = yy - z * coef;
  f.residual_cov = resid.transpose() * resid / static_cast<double>(m);
  return f;
}

/// x_t = sum_k phi_k x_{t-k} + e_t on a demeaned series (no intercept).
struct ArFit {
  Vector phi;  // phi_1 .. phi_p
  double sigma2 = 0.0;
  Eigen::Index rows = 0;

  int order() const { return static_cast<int>(phi.size()); }
};

/// Fit on target dates first_target..T (1-based) that avoid `excluded`.
inline ArFit fit_ar(const Vector& x, int p, const DateSet& excluded = {}, Eigen::Index first_target = 0) {
  const Eigen::Index t = x.size();
  if (p < 0) throw ArgumentError("fit_ar: negative order");
  ArFit f;
  std::vector<Eigen::Index> targets;
  for (Eigen::Index d = std::max<Eigen::Index>(p + 1, first_target); d <= t; ++d)
    if (detail::row_clean(d, p, excluded)) targets.push_back(d);
  const Eigen::Index m = static_cast<Eigen::Index>(targets.size());
  if (m <= p) throw ArgumentError("fit_ar: too few usable observations");
  Matrix z(m, p);
  Vector target(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index d = targets[static_cast<std::size_t>(r)];
    for (int k = 1; k <= p; ++k) z(r, k - 1) = x(d - 1 - k);
    target(r) = x(d - 1);
  }
  f.phi = p > 0 ? Vector(z.colPivHouseholderQr().solve(target)) : Vector();
  const Vector resid = p > 0 ? Vector(target - z * f.phi) : target;
  f.sigma2 = resid.squaredNorm() / static_cast<double>(m);
  f.rows = m;
  return f;
}

/// True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside the
/// unit circle, checked through the companion matrix.
inline bool ar_stationary(const Vector& phi) {
  const Eigen::Index p = phi.size();
  if (p == 0) return true;
  Matrix c = Matrix::Zero(p, p);
  c.row(0) = phi.transpose();
  for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
  const Eigen::VectorXcd ev = c.eigenvalues();
  return ev.cwiseAbs().maxCoeff() < 1.0 - 1e-10;
}

}  // namespace odfm
