#pragma once

// Factor-count selection and three estimators of the loadings A, the factor
// scores X and the idiosyncratic variances diag(Sigma_eta).

#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/moments.hpp"
#include "odfm/random.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace odfm {

enum class Method { Svd, JointDiag, Ml };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Svd: return "svd";
    case Method::JointDiag: return "jointdiag";
    case Method::Ml: return "ml";
  }
  return "svd";
}

inline Method parse_method(const std::string& s) {
  if (s == "svd") return Method::Svd;
  if (s == "jointdiag" || s == "jd") return Method::JointDiag;
  if (s == "ml") return Method::Ml;
  throw ConfigError("unknown estimator '" + s + "' (expected svd, jointdiag or ml)");
}

struct FactorDiagnostics {
  int iterations = 0;
  bool converged = true;
  std::optional<double> objective;       // jointdiag: sum_h sum_{i != j} (B Gamma(h) B')_ij^2
  std::vector<Vector> d_h;               // jointdiag: diag(B Gamma(h) B'), h = 1..H
  int restarts = 0;                      // jointdiag
  int best_restart = 0;                  // jointdiag
  std::optional<double> log_likelihood;  // ml
  std::vector<double> log_likelihood_trace;
  bool heywood = false;                  // ml: some variance hit the floor
  std::optional<double> discarded_energy;  // svd: sum of discarded eigenvalues of Y'Y
};

struct FactorModel {
  Matrix a;          // N x K
  Matrix x;          // K x T, empty when estimated from moments only
  Vector sigma_eta;  // diagonal of Sigma_eta
  int k = 0;
  Method method = Method::Svd;
  FactorDiagnostics diagnostics;

  Matrix sigma_eta_matrix() const { return sigma_eta.asDiagonal(); }
  /// Left inverse B = (A'A)^{-1} A'.
  Matrix b() const;
  /// Z = I - A (A'A)^{-1} A', the projector onto the orthogonal complement of span(A).
  Matrix orth_projector() const;
};

namespace detail {

inline void require_full_rank(const Matrix& a, const char* what) {
  if (a.cols() == 0) throw ArgumentError(std::string(what) + ": no factors");
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (!(s(s.size() - 1) > 1e-8 * s(0))) throw EstimationError(std::string(what) + ": loading matrix is rank deficient");
}

inline Matrix left_inverse(const Matrix& a) {
  require_full_rank(a, "left_inverse");
  return (a.transpose() * a).ldlt().solve(a.transpose());
}

// Apply the sign rule to each column of A and mirror the flips on the rows of
// the companions (factor scores, filter rows).
inline void canonical_columns(Matrix& a, Matrix* rows1 = nullptr, Matrix* rows2 = nullptr) {
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    if (detail::canonical_sign(a.col(k))) {
      if (rows1 && rows1->rows() > k) rows1->row(k) *= -1.0;
      if (rows2 && rows2->rows() > k) rows2->row(k) *= -1.0;
    }
  }
}

inline Matrix centered_values(const MultiSeries& series) {
  return series.values().colwise() - series.values().rowwise().mean();
}

}  // namespace detail

inline Matrix FactorModel::b() const { return detail::left_inverse(a); }

inline Matrix FactorModel::orth_projector() const {
  const Eigen::Index n = a.rows();
  return Matrix::Identity(n, n) - a * detail::left_inverse(a);
}

/// X = (A'A)^{-1} A' Y for the panel as given; centre it first if needed.
inline Matrix factor_scores(const Matrix& y, const Matrix& a) {
  if (y.rows() != a.rows()) throw ArgumentError("factor_scores: dimension mismatch");
  return detail::left_inverse(a) * y;
}

inline Matrix factor_scores(const MultiSeries& series, const FactorModel& model) {
  return factor_scores(series.values(), model.a);
}

// ---------------------------------------------------------------------------
// Number of factors

/// Smallest K with {V_K + (N - K) lambda_min} / V_N > 1 - alpha, where V_K is
/// the sum of the K largest eigenvalues. Without the floor correction the
/// rule is V_K / V_N > 1 - alpha.
inline int select_k(const Vector& eigenvalues, double alpha = 0.05, bool correct_floor = true) {
  const Eigen::Index n = eigenvalues.size();
  if (n == 0) throw ArgumentError("select_k: no eigenvalues");
  if (!(alpha > 0 && alpha < 1)) throw ArgumentError("select_k: alpha must lie in (0, 1)");
  Vector ev = eigenvalues.cwiseMax(0.0);
  std::sort(ev.data(), ev.data() + n, std::greater<>());
  const double total = ev.sum();
  if (!(total > 0)) throw ArgumentError("select_k: all eigenvalues are zero");
  const double floor = correct_floor ? ev(n - 1) : 0.0;
  double vk = 0.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    vk += ev(k - 1);
    if ((vk + static_cast<double>(n - k) * floor) / total > 1.0 - alpha) return static_cast<int>(k);
  }
  return static_cast<int>(n);
}

// ---------------------------------------------------------------------------
// Principal components (singular value decomposition of Y)

/// Y = W Lambda^{1/2} U' with X_hat = U_K' (orthonormal rows) and
/// A_hat = Y X_hat' = W_K Lambda_K^{1/2}.
struct SvdFactors {
  Matrix a_hat;   // N x K
  Matrix x_hat;   // K x T
  Matrix w;       // N x K left singular vectors
  Vector lambda;  // all eigenvalues of YY' (squared singular values), descending
};

inline SvdFactors svd_factors(const Matrix& y, int k) {
  const Eigen::Index n = y.rows();
  if (k < 1 || k > std::min<Eigen::Index>(n, y.cols())) throw ArgumentError("svd_factors: K out of range");
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s(k - 1) > 1e-12 * std::max(s(0), 1e-300)))
    throw EstimationError("estimate_svd: K = " + std::to_string(k) + " exceeds the rank of the data");
  SvdFactors out;
  out.w = svd.matrixU().leftCols(k);
  out.x_hat = svd.matrixV().leftCols(k).transpose();
  out.lambda = s.array().square().matrix();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (detail::canonical_sign(out.w.col(j))) out.x_hat.row(j) *= -1.0;
  }
  out.a_hat = y * out.x_hat.transpose();
  return out;
}

/// Principal-component factor model. Reported factors are rescaled to unit
/// sample variance (X = sqrt(T) X_hat, A = A_hat / sqrt(T)), so AA' is on the
/// scale of Gamma(0).
inline FactorModel estimate_svd(const MultiSeries& series, int k) {
  if (k < 1 || k >= series.n()) throw ArgumentError("estimate_svd: need 1 <= K < N");
  const Matrix y = detail::centered_values(series);
  const SvdFactors f = svd_factors(y, k);
  const double root_t = std::sqrt(static_cast<double>(series.t()));
  FactorModel m;
  m.k = k;
  m.method = Method::Svd;
  m.a = f.a_hat / root_t;
  m.x = f.x_hat * root_t;
  const Matrix gamma0 = y * y.transpose() / static_cast<double>(series.t());
  m.sigma_eta = (gamma0 - m.a * m.a.transpose()).diagonal().cwiseMax(0.0);
  m.diagnostics.discarded_energy = f.lambda.tail(f.lambda.size() - k).sum();
  return m;
}

// ---------------------------------------------------------------------------
// Joint diagonalization of lagged covariances

struct JointDiagOptions {
  int restarts = 5;
  std::uint64_t seed = 20240101;
  double tol = 1e-12;  // relative change of the least-squares fit
  int max_sweeps = 500;
};

namespace detail {

struct AcdcFit {
  Matrix a;
  std::vector<Vector> d;
  double fit = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  bool converged = false;
};

inline double acdc_fit(const std::vector<Matrix>& c, const Matrix& a, const std::vector<Vector>& d) {
  double f = 0.0;
  for (std::size_t h = 0; h < c.size(); ++h) f += (c[h] - a * d[h].asDiagonal() * a.transpose()).squaredNorm();
  return f;
}

inline void acdc_dc_phase(const std::vector<Matrix>& c, const Matrix& a, std::vector<Vector>& d) {
  const Matrix g = a.transpose() * a;
  const Eigen::LDLT<Matrix> solver(g.cwiseProduct(g));
  for (std::size_t h = 0; h < c.size(); ++h) d[h] = solver.solve((a.transpose() * c[h] * a).diagonal());
}

inline void acdc_ac_phase(const std::vector<Matrix>& c, Matrix& a, const std::vector<Vector>& d) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    Matrix p = Matrix::Zero(n, n);
    double dd = 0.0;
    for (std::size_t h = 0; h < c.size(); ++h) {
      Matrix r = c[h];
      for (Eigen::Index l = 0; l < a.cols(); ++l)
        if (l != k) r.noalias() -= d[h](l) * a.col(l) * a.col(l).transpose();
      p += d[h](k) * r;
      dd += d[h](k) * d[h](k);
    }
    if (!(dd > 0)) continue;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (p + p.transpose()));
    const double lmax = es.eigenvalues()(n - 1);
    // A non-positive top eigenvalue makes a_k = 0 optimal; the column is kept
    // instead so the loading matrix stays full rank.
    if (lmax > 0) a.col(k) = std::sqrt(lmax / dd) * es.eigenvectors().col(n - 1);
  }
}

inline AcdcFit acdc(const std::vector<Matrix>& c, Matrix a0, const JointDiagOptions& opt) {
  AcdcFit out;
  out.a = std::move(a0);
  out.d.assign(c.size(), Vector::Zero(out.a.cols()));
  acdc_dc_phase(c, out.a, out.d);
  double prev = acdc_fit(c, out.a, out.d);
  const double scale = std::max(prev, 1e-300);
  for (int s = 1; s <= opt.max_sweeps; ++s) {
    acdc_ac_phase(c, out.a, out.d);
    acdc_dc_phase(c, out.a, out.d);
    const double cur = acdc_fit(c, out.a, out.d);
    out.sweeps = s;
    if (!std::isfinite(cur)) break;
    if (std::abs(prev - cur) <= opt.tol * scale) {
      out.converged = true;
      prev = cur;
      break;
    }
    prev = cur;
  }
  out.fit = prev;
  return out;
}

inline bool full_rank(const Matrix& a) {
  if (!a.allFinite()) return false;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  return s(s.size() - 1) > 1e-8 * s(0);
}

}  // namespace detail

/// Approximate joint diagonalization of the symmetrized Gamma(h), h = 1..H,
/// as Gamma(h) ~ A D_h A' (least squares, alternating column and diagonal
/// updates). B = (A'A)^{-1} A' is rescaled so every factor has unit variance
/// under Gamma(0), and A_hat = B'(BB')^{-1}.
inline FactorModel estimate_jointdiag(const LagCovSet& covs, int k, int h_max, const JointDiagOptions& opt = {}) {
  const Eigen::Index n = covs.gammas.at(0).rows();
  if (k < 1 || k >= n) throw ArgumentError("estimate_jointdiag: need 1 <= K < N");
  if (h_max < k) throw ArgumentError("estimate_jointdiag: need H >= K");
  if (h_max > covs.max_lag()) throw ArgumentError("estimate_jointdiag: H exceeds the available lags");
  if (opt.restarts < 1) throw ArgumentError("estimate_jointdiag: need at least one restart");
  std::vector<Matrix> c;
  for (int h = 1; h <= h_max; ++h) {
    const Matrix& g = covs.gammas[static_cast<std::size_t>(h)];
    c.push_back(0.5 * (g + g.transpose()));
  }
  const Matrix& gamma0 = covs.gammas[0];
  const EigenSystem es = sym_eigen(gamma0);

  detail::AcdcFit best;
  int best_index = -1;
  for (int r = 0; r < opt.restarts; ++r) {
    Matrix a0;
    if (r == 0) {
      a0 = es.vectors.leftCols(k) * es.values.head(k).cwiseMax(1e-12).cwiseSqrt().asDiagonal();
    } else {
      Rng rng(stream_seed(opt.seed, static_cast<std::uint64_t>(r)));
      a0 = rng.normal_matrix(n, k) * std::sqrt(std::max(gamma0.trace(), 1e-300) / static_cast<double>(n * k));
    }
    detail::AcdcFit fit = detail::acdc(c, std::move(a0), opt);
    if (!detail::full_rank(fit.a)) continue;
    if (best_index < 0 || fit.fit < best.fit) {
      best = std::move(fit);
      best_index = r;
    }
  }
  if (best_index < 0)
    throw EstimationError("estimate_jointdiag: no restart reached a full-rank loading matrix; try a larger H");

  Matrix b = detail::left_inverse(best.a);
  const Vector var = (b * gamma0 * b.transpose()).diagonal();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(var(i) > 0)) throw EstimationError("estimate_jointdiag: an estimated factor has zero variance");
    b.row(i) /= std::sqrt(var(i));
  }
  Matrix a = b.transpose() * (b * b.transpose()).inverse();

  // Deterministic column order (decreasing loading norm) and signs.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a.col(i).norm() > a.col(j).norm(); });
  Matrix a_sorted(n, k), b_sorted(k, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    a_sorted.col(i) = a.col(order[static_cast<std::size_t>(i)]);
    b_sorted.row(i) = b.row(order[static_cast<std::size_t>(i)]);
  }
  detail::canonical_columns(a_sorted, &b_sorted);

  FactorModel m;
  m.k = k;
  m.method = Method::JointDiag;
  m.a = std::move(a_sorted);
  m.sigma_eta = (gamma0 - m.a * m.a.transpose()).diagonal().cwiseMax(0.0);
  double objective = 0.0;
  for (int h = 1; h <= h_max; ++h) {
    const Matrix bgb = b_sorted * covs.gammas[static_cast<std::size_t>(h)] * b_sorted.transpose();
    m.diagnostics.d_h.push_back(bgb.diagonal());
    objective += bgb.squaredNorm() - bgb.diagonal().squaredNorm();
  }
  m.diagnostics.objective = objective;
  m.diagnostics.iterations = best.sweeps;
  m.diagnostics.converged = best.converged;
  m.diagnostics.restarts = opt.restarts;
  m.diagnostics.best_restart = best_index;
  return m;
}

/// Series overload: moments up to lag H, and X_hat = B_hat Y on the centred panel.
inline FactorModel estimate_jointdiag(const MultiSeries& series, int k, int h_max, const JointDiagOptions& opt = {}) {
  FactorModel m = estimate_jointdiag(lag_cov(series, h_max), k, h_max, opt);
  m.x = factor_scores(detail::centered_values(series), m.a);
  return m;
}

// ---------------------------------------------------------------------------
// Gaussian maximum likelihood (alternating closed forms)

struct MlOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  std::optional<Vector> initial_sigma_eta;  // default diag(Gamma(0)) / 2
};

inline constexpr double kSigmaFloor = 1e-8;

/// -1/2 [N log 2 pi + log|S| + tr(S^{-1} G)] with S = AA' + Sigma.
inline double factor_log_likelihood(const Matrix& gamma0, const Matrix& a, const Vector& sigma) {
  const Eigen::Index n = gamma0.rows();
  const Matrix s = a * a.transpose() + Matrix(sigma.asDiagonal());
  const Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double tr = llt.solve(gamma0).trace();
  return -0.5 * (static_cast<double>(n) * std::log(kTwoPi) + logdet + tr);
}

inline FactorModel estimate_ml(const Matrix& gamma0, int k, const MlOptions& opt = {}) {
  const Eigen::Index n = gamma0.rows();
  if (gamma0.cols() != n) throw ArgumentError("estimate_ml: covariance is not square");
  if (k < 1 || k >= n) throw ArgumentError("estimate_ml: need 1 <= K < N");
  if (Eigen::LLT<Matrix>(gamma0).info() != Eigen::Success)
    throw ArgumentError("estimate_ml: covariance is not positive definite");
  Vector sigma = opt.initial_sigma_eta ? *opt.initial_sigma_eta : Vector(gamma0.diagonal() / 2.0);
  if (sigma.size() != n || !(sigma.minCoeff() > 0)) throw ArgumentError("estimate_ml: invalid initial Sigma_eta");

  FactorModel m;
  m.k = k;
  m.method = Method::Ml;
  m.diagnostics.converged = false;
  Matrix a;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Vector root = sigma.cwiseSqrt();
    const Vector inv_root = root.cwiseInverse();
    const Matrix scaled = inv_root.asDiagonal() * gamma0 * inv_root.asDiagonal();
    const EigenSystem es = sym_eigen(0.5 * (scaled + scaled.transpose()));
    const Vector lam = (es.values.head(k).array() - 1.0).cwiseMax(0.0).sqrt().matrix();
    a = root.asDiagonal() * es.vectors.leftCols(k) * lam.asDiagonal();
    sigma = (gamma0 - a * a.transpose()).diagonal();
    bool floored = false;
    for (Eigen::Index i = 0; i < n; ++i)
      if (sigma(i) < kSigmaFloor) {
        sigma(i) = kSigmaFloor;
        floored = true;
      }
    m.diagnostics.heywood = floored;
    const double ll = factor_log_likelihood(gamma0, a, sigma);
    m.diagnostics.log_likelihood_trace.push_back(ll);
    m.diagnostics.iterations = it;
    if (std::abs(ll - prev) < opt.tol) {
      m.diagnostics.converged = true;
      break;
    }
    prev = ll;
  }
  detail::canonical_columns(a);
  m.a = std::move(a);
  m.sigma_eta = std::move(sigma);
  m.diagnostics.log_likelihood = m.diagnostics.log_likelihood_trace.back();
  return m;
}

/// Series overload: Gamma(0) of the panel, and X_hat = (A'A)^{-1}A'Y when A has full rank.
inline FactorModel estimate_ml(const MultiSeries& series, int k, const MlOptions& opt = {}) {
  const Matrix y = detail::centered_values(series);
  FactorModel m = estimate_ml(Matrix(y * y.transpose() / static_cast<double>(series.t())), k, opt);
  if (detail::full_rank(m.a)) m.x = factor_scores(y, m.a);
  return m;
}

/// Dispatch by method tag. H for the joint diagonalizer defaults to K.
inline FactorModel estimate(const MultiSeries& series, int k, Method method, int h_max = 0,
                            const JointDiagOptions& jd = {}, const MlOptions& ml = {}) {
  switch (method) {
    case Method::Svd: return estimate_svd(series, k);
    case Method::JointDiag: return estimate_jointdiag(series, k, h_max > 0 ? h_max : k, jd);
    case Method::Ml: return estimate_ml(series, k, ml);
  }
  throw ArgumentError("unknown estimator");
}

}  // namespace odfm
