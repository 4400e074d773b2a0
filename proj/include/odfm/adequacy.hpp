#pragma once

// Frequency-domain likelihood-ratio test that the spectral density matrix is
// real on a band of Fourier frequencies. A real spectrum at every frequency is
// equivalent to symmetric lag covariances, which a factor model with
// independent factors and diagonal idiosyncratic noise always has.

#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/moments.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace odfm {

struct BandMoments {
  Matrix s_real;  // S_R, symmetric PSD
  Matrix s_imag;  // S_I, antisymmetric
  Eigen::Index j = 0;
  Eigen::Index a = 0;  // band is (a, b] in Fourier indices
  Eigen::Index b = 0;
};

/// How the chi-square degrees of freedom are chosen for -m log U.
enum class DfRule {
  NSquared,      // N^2, the classical approximation
  Antisymmetric  // N(N-1)/2, the number of free entries of Im F
};

inline std::string to_string(DfRule r) { return r == DfRule::NSquared ? "n-squared" : "antisymmetric"; }

inline DfRule parse_df_rule(const std::string& s) {
  if (s == "n-squared" || s == "nsquared") return DfRule::NSquared;
  if (s == "antisymmetric") return DfRule::Antisymmetric;
  throw ConfigError("unknown df rule '" + s + "'");
}

struct RealityTest {
  double u = 1.0;          // |I + (S_R^{-1} S_I)^2|, in (0, 1]
  double m = 0.0;          // J - N - 3/2
  double statistic = 0.0;  // -m log U
  double df = 0.0;
  double p_value = 1.0;
};

struct BandResult {
  BandMoments moments;
  RealityTest test;
  double critical = 0.0;
  bool reject = false;
};

struct AdequacyResult {
  std::vector<BandResult> bands;
  double alpha = 0.05;
  DfRule df_rule = DfRule::NSquared;
  /// Any band rejects at level alpha. No multiplicity correction is applied,
  /// so the family-wise level exceeds alpha when several bands are tested.
  bool reject_any = false;
};

/// Band moments from explicit DFT vectors X_j = d(lambda_{a+j}), j = 1..J.
inline BandMoments band_moments(std::span<const CVector> dfts) {
  if (dfts.empty()) throw ArgumentError("band_moments: empty band");
  const Eigen::Index n = dfts.front().size();
  BandMoments bm;
  bm.s_real = Matrix::Zero(n, n);
  bm.s_imag = Matrix::Zero(n, n);
  for (const auto& d : dfts) {
    const Vector xr = d.real();
    const Vector xi = d.imag();
    bm.s_real += xr * xr.transpose() + xi * xi.transpose();
    bm.s_imag += xi * xr.transpose() - xr * xi.transpose();
  }
  bm.j = static_cast<Eigen::Index>(dfts.size());
  bm.s_real /= static_cast<double>(bm.j);
  bm.s_imag /= static_cast<double>(bm.j);
  return bm;
}

/// Interior Fourier indices available for banding: 1 .. ceil(T/2) - 1, so
/// both lambda = 0 and lambda = pi are excluded.
inline Eigen::Index interior_fourier_count(Eigen::Index t) { return (t - 1) / 2; }

/// Band moments over the Fourier-index range (a, b] of a computed spectrum.
inline BandMoments band_moments(const SpectralSet& spec, Eigen::Index a, Eigen::Index b) {
  const Eigen::Index n = spec.dft.rows();
  if (a < 0 || b > interior_fourier_count(spec.t) || b <= a)
    throw ArgumentError("band (" + std::to_string(a) + ", " + std::to_string(b) + "] is outside (0, pi)");
  if (b - a < n + 2)
    throw ArgumentError("band has J = " + std::to_string(b - a) + " frequencies; need at least N + 2 = " +
                        std::to_string(n + 2));
  std::vector<CVector> xs;
  xs.reserve(static_cast<std::size_t>(b - a));
  for (Eigen::Index j = a + 1; j <= b; ++j) xs.push_back(spec.dft.col(static_cast<Eigen::Index>(spec.pos(j))));
  BandMoments bm = band_moments(std::span<const CVector>(xs));
  bm.a = a;
  bm.b = b;
  return bm;
}

inline double chi2_upper_tail(double x, double df) {
  if (x <= 0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

inline double chi2_quantile(double p, double df) {
  boost::math::chi_squared dist(df);
  return boost::math::quantile(dist, p);
}

/// U = |I + (S_R^{-1} S_I)^2| and the chi-square approximation of -m log U.
inline RealityTest reality_lrt(const BandMoments& bm, DfRule rule = DfRule::NSquared) {
  const Eigen::Index n = bm.s_real.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(bm.s_real);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > 0) || lmax / lmin > 1e12)
    throw EstimationError("S_R is singular or ill-conditioned; widen the frequency band");
  const Matrix m_mat = bm.s_real.llt().solve(bm.s_imag);
  const Matrix inner = Matrix::Identity(n, n) + m_mat * m_mat;
  RealityTest r;
  r.u = inner.determinant();
  if (r.u > 1.0 + 1e-12) throw EstimationError("reality_lrt: U exceeds one; S_I is not antisymmetric");
  if (!(r.u > 0)) throw EstimationError("reality_lrt: U is not positive");
  r.u = std::min(r.u, 1.0);
  r.m = static_cast<double>(bm.j) - static_cast<double>(n) - 1.5;
  r.statistic = -r.m * std::log(r.u);
  if (r.statistic < 0) r.statistic = 0;
  r.df = rule == DfRule::NSquared ? static_cast<double>(n * n) : static_cast<double>(n * (n - 1)) / 2.0;
  r.p_value = r.df > 0 ? chi2_upper_tail(r.statistic, r.df) : 1.0;
  return r;
}

/// Splits the interior Fourier indices into n_bands equal contiguous ranges;
/// the remainder goes to the last band.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> equal_bands(Eigen::Index t, int n_bands) {
  if (n_bands < 1) throw ArgumentError("n_bands must be positive");
  const Eigen::Index total = interior_fourier_count(t);
  const Eigen::Index width = total / n_bands;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (int l = 0; l < n_bands; ++l) {
    const Eigen::Index a = l * width;
    const Eigen::Index b = (l == n_bands - 1) ? total : (l + 1) * width;
    out.emplace_back(a, b);
  }
  return out;
}

struct AdequacyOptions {
  int n_bands = 4;
  double alpha = 0.05;
  DfRule df_rule = DfRule::NSquared;
};

inline AdequacyResult adequacy_test(const MultiSeries& series, const AdequacyOptions& opt = {}) {
  const Eigen::Index n = series.n();
  const Eigen::Index width = interior_fourier_count(series.t()) / std::max(opt.n_bands, 1);
  if (opt.n_bands < 1 || width < n + 2)
    throw ArgumentError("too few Fourier frequencies per band: " + std::to_string(width) + " < N + 2 = " +
                        std::to_string(n + 2));
  const SpectralSet spec = periodogram(center(series).first);
  AdequacyResult res;
  res.alpha = opt.alpha;
  res.df_rule = opt.df_rule;
  for (const auto& [a, b] : equal_bands(series.t(), opt.n_bands)) {
    BandResult br;
    br.moments = band_moments(spec, a, b);
    br.test = reality_lrt(br.moments, opt.df_rule);
    br.critical = chi2_quantile(1.0 - opt.alpha, br.test.df);
    br.reject = br.test.p_value < opt.alpha;
    res.reject_any = res.reject_any || br.reject;
    res.bands.push_back(std::move(br));
  }
  return res;
}

}  // namespace odfm
