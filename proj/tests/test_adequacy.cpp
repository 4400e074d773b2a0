#include "odfm/adequacy.hpp"
#include "odfm/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace odfm;

namespace {

std::vector<CVector> random_dfts(Eigen::Index n, int j, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CVector> out;
  for (int k = 0; k < j; ++k) {
    CVector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = Complex(rng.normal(), rng.normal());
    out.push_back(d);
  }
  return out;
}

// Complex-normal log-likelihood -J log|F| - sum d* F^-1 d, evaluated term by term.
double complex_loglik(const std::vector<CVector>& xs, const CMatrix& f) {
  const CMatrix inv = f.inverse();
  double quad = 0.0;
  for (const auto& d : xs) quad += (d.adjoint() * inv * d)(0, 0).real();
  return -static_cast<double>(xs.size()) * std::log(std::abs(f.determinant())) - quad;
}

double u_of(const std::vector<CVector>& xs) {
  BandMoments bm = band_moments(std::span<const CVector>(xs));
  return reality_lrt(bm).u;
}

}  // namespace

TEST(BandMoments, RealDftsGiveZeroImaginaryPart) {
  std::vector<CVector> xs = random_dfts(3, 8, 1);
  for (auto& d : xs) d = d.real().cast<Complex>();
  const BandMoments bm = band_moments(std::span<const CVector>(xs));
  EXPECT_TRUE(bm.s_imag.isZero(0.0));
  const RealityTest r = reality_lrt(bm);
  EXPECT_DOUBLE_EQ(r.u, 1.0);
  EXPECT_DOUBLE_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(BandMoments, SingleFrequencyHandComputed) {
  CVector d(2);
  d << Complex(1, 0), Complex(0, 1);  // X^R = e1, X^I = e2
  const std::vector<CVector> xs{d};
  const BandMoments bm = band_moments(std::span<const CVector>(xs));
  EXPECT_TRUE(bm.s_real.isApprox(Matrix::Identity(2, 2)));
  Matrix expected(2, 2);
  expected << 0, -1, 1, 0;
  EXPECT_TRUE(bm.s_imag.isApprox(expected));
  EXPECT_EQ(bm.j, 1);
}

TEST(BandMoments, SymmetryInvariants) {
  const std::vector<CVector> xs = random_dfts(4, 10, 2);
  const BandMoments bm = band_moments(std::span<const CVector>(xs));
  EXPECT_LT((bm.s_real - bm.s_real.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((bm.s_imag + bm.s_imag.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(bm.s_real).eigenvalues().minCoeff(), 0.0);
}

TEST(BandMoments, WhiteNoiseBandNearSpectrum) {
  const Eigen::Index n = 3, t = 400;
  Matrix avg = Matrix::Zero(n, n);
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    Rng rng(stream_seed(3, static_cast<std::uint64_t>(r)));
    const SpectralSet s = periodogram(MultiSeries(rng.normal_matrix(n, t)));
    avg += band_moments(s, 20, 70).s_real;
  }
  avg /= reps;
  // Re d and Im d each have covariance F/2 and S_R adds both, so S_R -> F = I / (2 pi).
  EXPECT_LT((avg - Matrix::Identity(n, n) / (2.0 * kPi)).cwiseAbs().maxCoeff(), 0.005);
}

TEST(BandMoments, RangeChecks) {
  const SpectralSet s = periodogram(MultiSeries(Rng(4).normal_matrix(3, 40)));
  EXPECT_THROW(band_moments(s, 0, 4), ArgumentError);    // J < N + 2
  EXPECT_THROW(band_moments(s, 10, 20), ArgumentError);  // beyond 19 interior indices
  EXPECT_THROW(band_moments(s, -1, 8), ArgumentError);
  EXPECT_NO_THROW(band_moments(s, 0, 19));
}

TEST(RealityLrt, CriticalValueForFiveSeries) {
  BandMoments bm;
  bm.s_real = Matrix::Identity(5, 5);
  bm.s_imag = Matrix::Zero(5, 5);
  bm.j = 25;
  const RealityTest r = reality_lrt(bm);
  EXPECT_DOUBLE_EQ(r.m, 18.5);
  EXPECT_EQ(r.df, 25.0);
  EXPECT_NEAR(chi2_quantile(0.95, r.df), 37.65, 5e-3);
  EXPECT_NEAR(chi2_upper_tail(37.6525, 25), 0.05, 1e-4);
}

TEST(RealityLrt, TwoByTwoDeterminantFormula) {
  for (double s : {0.1, 0.5, 0.9}) {
    BandMoments bm;
    bm.s_real = Matrix::Identity(2, 2);
    bm.s_imag = Matrix::Zero(2, 2);
    bm.s_imag(0, 1) = s;
    bm.s_imag(1, 0) = -s;
    bm.j = 10;
    EXPECT_NEAR(reality_lrt(bm).u, std::pow(1 - s * s, 2), 1e-14);
  }
}

TEST(RealityLrt, MatchesDirectLikelihoodRatio) {
  for (Eigen::Index n : {2, 4}) {
    const std::vector<CVector> xs = random_dfts(n, 12, static_cast<std::uint64_t>(10 + n));
    const BandMoments bm = band_moments(std::span<const CVector>(xs));
    const CMatrix f_complex = bm.s_real.cast<Complex>() + Complex(0, 1) * bm.s_imag.cast<Complex>();
    const CMatrix f_real = bm.s_real.cast<Complex>();
    // Unrestricted MLE is the complex sample matrix; under a real spectrum it is S_R.
    const double log_ratio = complex_loglik(xs, f_real) - complex_loglik(xs, f_complex);
    const RealityTest r = reality_lrt(bm);
    EXPECT_NEAR(log_ratio, 0.5 * static_cast<double>(xs.size()) * std::log(r.u), 1e-10) << "N=" << n;
    EXPECT_LE(r.u, 1.0);
    EXPECT_GE(r.statistic, 0.0);
  }
}

TEST(RealityLrt, SingularRealPartRejected) {
  BandMoments bm;
  bm.s_real = Matrix::Zero(3, 3);
  bm.s_real(0, 0) = 1;
  bm.s_imag = Matrix::Zero(3, 3);
  bm.j = 10;
  EXPECT_THROW(reality_lrt(bm), EstimationError);
}

TEST(RealityLrt, RotationInvariance) {
  const std::vector<CVector> xs = random_dfts(4, 15, 21);
  Rng rng(22);
  const Matrix q = Eigen::HouseholderQR<Matrix>(rng.normal_matrix(4, 4)).householderQ();
  std::vector<CVector> rotated;
  for (const auto& d : xs) rotated.push_back(q.cast<Complex>() * d);
  EXPECT_NEAR(u_of(xs), u_of(rotated), 1e-12);
}

TEST(RealityLrt, SwappingRealAndImaginaryParts) {
  const std::vector<CVector> xs = random_dfts(3, 15, 31);
  std::vector<CVector> swapped;
  for (const auto& d : xs) {
    CVector s(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) s(i) = Complex(d(i).imag(), d(i).real());
    swapped.push_back(s);
  }
  const BandMoments a = band_moments(std::span<const CVector>(xs));
  const BandMoments b = band_moments(std::span<const CVector>(swapped));
  EXPECT_TRUE(b.s_imag.isApprox(-a.s_imag));
  EXPECT_NEAR(u_of(xs), u_of(swapped), 1e-12);
}

TEST(EqualBands, InteriorIndicesSplit) {
  const auto bands = equal_bands(100, 4);
  ASSERT_EQ(bands.size(), 4u);
  EXPECT_EQ(bands[0], std::make_pair(Eigen::Index{0}, Eigen::Index{12}));
  EXPECT_EQ(bands[3], std::make_pair(Eigen::Index{36}, Eigen::Index{49}));
  EXPECT_EQ(interior_fourier_count(200), 99);
  EXPECT_EQ(interior_fourier_count(201), 100);
}

TEST(AdequacyTest, TooFewFrequenciesRejected) {
  EXPECT_THROW(adequacy_test(MultiSeries(Rng(1).normal_matrix(5, 40))), ArgumentError);
}

TEST(AdequacyTest, ReportsEveryBand) {
  const AdequacyResult res = adequacy_test(MultiSeries(Rng(2).normal_matrix(5, 100)));
  ASSERT_EQ(res.bands.size(), 4u);
  bool any = false;
  for (const auto& b : res.bands) {
    EXPECT_NEAR(b.critical, 37.65, 5e-3);
    EXPECT_EQ(b.test.m, static_cast<double>(b.moments.j) - 6.5);
    any = any || b.reject;
  }
  EXPECT_EQ(any, res.reject_any);
}

TEST(AdequacyTest, LaggedCopyHasPower) {
  const Eigen::Index t = 400;
  int rejections = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    Rng rng(stream_seed(5, static_cast<std::uint64_t>(r)));
    const Matrix e = rng.normal_matrix(2, t + 1);
    Matrix y(2, t);
    for (Eigen::Index s = 0; s < t; ++s) {
      y(0, s) = e(0, s + 1);
      y(1, s) = e(0, s) + 0.3 * e(1, s);
    }
    if (adequacy_test(MultiSeries(y)).reject_any) ++rejections;
  }
  EXPECT_GE(rejections, 36);
}
