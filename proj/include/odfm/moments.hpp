#pragma once

// Second-moment estimation in the time and frequency domains, plus the
// symmetric eigenproblem used by every other module.

#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace odfm {

// ---------------------------------------------------------------------------
// Symmetric eigenproblem

struct EigenSystem {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values(k), unit norm
};

/// Eigen-decomposition of a real symmetric matrix with a deterministic
/// output: eigenvalues descending (equal values keep ascending-solver order),
/// each eigenvector's largest-magnitude entry positive, ties to the lowest
/// index.
inline EigenSystem sym_eigen(const Matrix& s) {
  if (s.rows() != s.cols()) throw ArgumentError("sym_eigen: matrix is not square");
  const double scale = detail::max_abs(s);
  if (detail::max_abs(s - s.transpose()) > 1e-10 * std::max(scale, 1e-300) && scale > 0)
    throw ArgumentError("sym_eigen: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (s + s.transpose()));
  if (solver.info() != Eigen::Success) throw EstimationError("sym_eigen: eigensolver failed");
  const Eigen::Index n = s.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Vector& ev = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ev(a) > ev(b); });
  EigenSystem out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = ev(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    detail::canonical_sign(out.vectors.col(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lag covariances

/// Sample autocovariance matrices Gamma(h), h = 0..M, with divisor T at every
/// lag and the sample mean removed once.
struct LagCovSet {
  std::vector<Matrix> gammas;
  Vector mean;
  Eigen::Index t = 0;

  Eigen::Index max_lag() const { return static_cast<Eigen::Index>(gammas.size()) - 1; }
  const Matrix& operator[](std::size_t h) const { return gammas.at(h); }
};

inline LagCovSet lag_cov(const MultiSeries& series, Eigen::Index max_lag) {
  const Eigen::Index t = series.t();
  if (max_lag < 0 || max_lag >= t) throw ArgumentError("lag_cov: need 0 <= max_lag < T");
  LagCovSet out;
  out.t = t;
  out.mean = series.values().rowwise().mean();
  const Matrix yc = series.values().colwise() - out.mean;
  out.gammas.reserve(static_cast<std::size_t>(max_lag + 1));
  for (Eigen::Index h = 0; h <= max_lag; ++h) {
    const Eigen::Index len = t - h;
    out.gammas.push_back(yc.leftCols(len) * yc.rightCols(len).transpose() / static_cast<double>(t));
  }
  return out;
}

/// Last lag at which some entry of the sample autocorrelation matrix exceeds
/// 2/sqrt(T) in magnitude, searched up to floor(T/4). Returns 0 when no lag is
/// significant.
inline Eigen::Index auto_max_lag(const MultiSeries& series) {
  const Eigen::Index t = series.t();
  const Eigen::Index cap = std::max<Eigen::Index>(1, t / 4);
  const LagCovSet covs = lag_cov(series, std::min(cap, t - 1));
  Vector sd = covs.gammas[0].diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    if (sd(i) == 0.0) sd(i) = 1.0;
  const Matrix norm = sd * sd.transpose();
  const double bound = 2.0 / std::sqrt(static_cast<double>(t));
  Eigen::Index last = 0;
  for (Eigen::Index h = 1; h <= covs.max_lag(); ++h) {
    const Matrix r = covs.gammas[static_cast<std::size_t>(h)].cwiseQuotient(norm);
    if (r.cwiseAbs().maxCoeff() > bound) last = h;
  }
  return last;
}

// ---------------------------------------------------------------------------
// Discrete Fourier transform  d_T(lambda_j) = (2 pi T)^{-1/2} sum_t y_t e^{-i lambda_j t}

inline constexpr Eigen::Index kDirectDftLimit = 512;

/// Lowest and highest Fourier index in (-T/2, T/2].
inline Eigen::Index fourier_lo(Eigen::Index t) { return -((t - 1) / 2); }
inline Eigen::Index fourier_hi(Eigen::Index t) { return t / 2; }

inline double fourier_frequency(Eigen::Index j, Eigen::Index t) {
  return kTwoPi * static_cast<double>(j) / static_cast<double>(t);
}

namespace detail {

inline CVector dft_direct(const Matrix& y, Eigen::Index j) {
  const Eigen::Index t = y.cols();
  CVector acc = CVector::Zero(y.rows());
  for (Eigen::Index s = 0; s < t; ++s) {
    // Reduce the phase argument modulo T to keep it exact for large t.
    const long long idx = (static_cast<long long>(j) * (s + 1)) % static_cast<long long>(t);
    const double ang = -kTwoPi * static_cast<double>(idx) / static_cast<double>(t);
    const Complex e(std::cos(ang), std::sin(ang));
    acc += y.col(s).cast<Complex>() * e;
  }
  return acc / std::sqrt(kTwoPi * static_cast<double>(t));
}

// All Fourier indices at once; column k holds index fourier_lo(T) + k.
inline CMatrix dft_all_direct(const Matrix& y) {
  const Eigen::Index t = y.cols();
  const Eigen::Index lo = fourier_lo(t);
  CMatrix out(y.rows(), t);
  for (Eigen::Index k = 0; k < t; ++k) out.col(k) = dft_direct(y, lo + k);
  return out;
}

inline CMatrix dft_all_fft(const Matrix& y) {
  const Eigen::Index t = y.cols();
  const Eigen::Index lo = fourier_lo(t);
  Eigen::FFT<double> fft;
  CMatrix out(y.rows(), t);
  const double norm = 1.0 / std::sqrt(kTwoPi * static_cast<double>(t));
  std::vector<double> row(static_cast<std::size_t>(t));
  std::vector<Complex> spec;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index s = 0; s < t; ++s) row[static_cast<std::size_t>(s)] = y(i, s);
    fft.fwd(spec, row);
    // fft.fwd returns sum_{n} x_n e^{-2 pi i k n / T}; time t = n + 1 adds e^{-i lambda_k}.
    for (Eigen::Index k = 0; k < t; ++k) {
      const Eigen::Index j = lo + k;
      const Eigen::Index m = ((j % t) + t) % t;
      const double ang = -fourier_frequency(j, t);
      out(i, k) = spec[static_cast<std::size_t>(m)] * Complex(std::cos(ang), std::sin(ang)) * norm;
    }
  }
  return out;
}

}  // namespace detail

/// d_T(lambda_j) for one Fourier index j in (-T/2, T/2]. Callers pass a
/// centered panel when the mean should not leak into j = 0.
inline CVector dft(const MultiSeries& series, Eigen::Index j) {
  const Eigen::Index t = series.t();
  if (j < fourier_lo(t) || j > fourier_hi(t)) throw ArgumentError("dft: Fourier index out of range");
  return detail::dft_direct(series.values(), j);
}

/// d_T at every Fourier index; direct summation up to T = 512, FFT above.
inline CMatrix dft_all(const MultiSeries& series) {
  return series.t() <= kDirectDftLimit ? detail::dft_all_direct(series.values()) : detail::dft_all_fft(series.values());
}

// ---------------------------------------------------------------------------
// Periodogram and smoothed spectrum

/// Spectral window as symmetric weights v over Fourier-index offsets -m..m,
/// normalized to sum one. The lag-window form is w_T(lambda_k) = T/(2 pi) v_k,
/// so the w_T weights sum to T/(2 pi) and a flat periodogram is reproduced.
/// With M = T sum v^2 the normalization (2 pi / T) sum w_T^2 = c0 M holds with
/// c0 = 1/(2 pi).
struct SpectralWindow {
  std::string kind = "daniell";
  std::vector<double> weights;  // length 2m + 1
  double c0 = 0.0;              // (2 pi / T) sum w_T^2 = c0 * M
  double truncation = 0.0;      // equivalent truncation point M

  Eigen::Index half_width() const { return static_cast<Eigen::Index>(weights.size() / 2); }
};

/// Flat window of half-width m Fourier spacings.
inline SpectralWindow daniell_window(Eigen::Index m) {
  if (m < 1) throw ArgumentError("daniell_window: half-width must be at least one Fourier spacing");
  SpectralWindow w;
  w.kind = "daniell";
  w.weights.assign(static_cast<std::size_t>(2 * m + 1), 1.0 / static_cast<double>(2 * m + 1));
  w.c0 = 1.0 / kTwoPi;
  return w;
}

/// Window from arbitrary symmetric offset weights (odd length >= 3).
inline SpectralWindow custom_window(std::vector<double> weights, std::string kind = "custom") {
  if (weights.size() < 3 || weights.size() % 2 == 0)
    throw ArgumentError("spectral window needs an odd number (>= 3) of weights");
  double sum = 0.0;
  for (double v : weights) {
    if (!std::isfinite(v) || v < 0) throw ArgumentError("spectral window weights must be finite and nonnegative");
    sum += v;
  }
  if (!(sum > 0.0)) throw ArgumentError("degenerate spectral window: all weights are zero");
  for (double& v : weights) v /= sum;
  SpectralWindow w;
  w.kind = std::move(kind);
  w.weights = std::move(weights);
  w.c0 = 1.0 / kTwoPi;
  return w;
}

struct SpectralSet {
  Eigen::Index t = 0;
  std::vector<Eigen::Index> indices;  // Fourier indices j, ascending from fourier_lo(T)
  std::vector<double> freqs;          // lambda_j
  CMatrix dft;                        // N x T, column k <-> indices[k]
  std::vector<CMatrix> periodograms;  // I(lambda_j) = d d^*
  std::optional<std::vector<CMatrix>> smoothed;
  std::optional<SpectralWindow> window;

  /// Column position of Fourier index j.
  std::size_t pos(Eigen::Index j) const {
    const Eigen::Index lo = fourier_lo(t);
    if (j < lo || j > fourier_hi(t)) throw ArgumentError("Fourier index out of range");
    return static_cast<std::size_t>(j - lo);
  }
};

inline SpectralSet periodogram(const MultiSeries& series) {
  SpectralSet s;
  s.t = series.t();
  s.dft = dft_all(series);
  const Eigen::Index lo = fourier_lo(s.t);
  for (Eigen::Index k = 0; k < s.t; ++k) {
    s.indices.push_back(lo + k);
    s.freqs.push_back(fourier_frequency(lo + k, s.t));
    const CVector d = s.dft.col(k);
    s.periodograms.push_back(d * d.adjoint());
  }
  return s;
}

/// F_hat(lambda_k) = (2 pi / T) sum_j I(lambda_j) w_T(lambda_k - lambda_j), with
/// the window wrapped circularly over the Fourier frequencies.
inline SpectralSet smoothed_spectrum(SpectralSet spec, SpectralWindow window) {
  if (spec.periodograms.empty()) throw ArgumentError("smoothed_spectrum: periodograms not computed");
  double sum = 0.0;
  for (double v : window.weights) sum += v;
  if (!(sum > 0.0)) throw ArgumentError("degenerate spectral window: all weights are zero");
  const Eigen::Index t = spec.t;
  const Eigen::Index m = window.half_width();
  const Eigen::Index n = spec.periodograms.front().rows();
  std::vector<CMatrix> out(static_cast<std::size_t>(t), CMatrix::Zero(n, n));
  for (Eigen::Index k = 0; k < t; ++k) {
    CMatrix acc = CMatrix::Zero(n, n);
    for (Eigen::Index off = -m; off <= m; ++off) {
      const Eigen::Index src = ((k + off) % t + t) % t;
      acc += spec.periodograms[static_cast<std::size_t>(src)] * (window.weights[static_cast<std::size_t>(off + m)] / sum);
    }
    out[static_cast<std::size_t>(k)] = std::move(acc);
  }
  double sq = 0.0;
  for (double v : window.weights) sq += (v / sum) * (v / sum);
  window.truncation = static_cast<double>(t) * sq;
  spec.smoothed = std::move(out);
  spec.window = std::move(window);
  return spec;
}

}  // namespace odfm
