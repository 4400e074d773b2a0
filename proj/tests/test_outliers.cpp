#include "odfm/outliers.hpp"
#include "odfm/presets.hpp"
#include "odfm/random.hpp"
#include "odfm/simulation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace odfm;

namespace {

SimConfig section7() { return preset("section7"); }

MultiSeries contaminated(std::uint64_t seed) {
  Rng rng(seed);
  return simulate_once(section7(), rng);
}

MultiSeries clean(std::uint64_t seed, int t = 100) {
  SimConfig cfg = section7();
  cfg.t = t;
  cfg.omega = Vector();
  cfg.dates.clear();
  Rng rng(seed);
  return simulate_once(cfg, rng);
}

ProjectionSet single(const Vector& w) {
  ProjectionSet ps;
  ps.directions = Matrix::Identity(1, 1);
  return project(ps, MultiSeries(Matrix(w.transpose())));
}

std::vector<Eigen::Index> dates_of(const std::vector<Detection>& ds) {
  std::vector<Eigen::Index> out;
  for (const auto& d : ds) out.push_back(d.date);
  return out;
}

}  // namespace

TEST(Directions, ExactCovarianceGivesNullDirections) {
  const Matrix a = section7().a;
  LagCovSet covs;
  covs.gammas.push_back(a * a.transpose() + 0.04 * Matrix::Identity(5, 5));
  covs.gammas.push_back(a * Vector(section7().phi).asDiagonal() * a.transpose());
  for (DetectionMode mode : {DetectionMode::Homoscedastic, DetectionMode::Heteroscedastic}) {
    const ProjectionSet ps = projection_directions(covs, 4, mode);
    ASSERT_EQ(ps.count(), 1);
    EXPECT_LT((ps.directions.col(0).transpose() * a).norm(), 1e-8) << to_string(mode);
    EXPECT_NEAR(ps.directions.col(0).norm(), 1.0, 1e-14);
  }
  const ProjectionSet three = projection_directions(covs, 2, DetectionMode::Homoscedastic);
  EXPECT_LT((three.directions.transpose() * three.directions - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(three.eigenvalues(0), three.eigenvalues(1));
  EXPECT_THROW(projection_directions(covs, 5, DetectionMode::Homoscedastic), ArgumentError);
}

TEST(Directions, IdentityCovarianceIsDeterministic) {
  LagCovSet covs;
  covs.gammas.push_back(Matrix::Identity(4, 4));
  const ProjectionSet a = projection_directions(covs, 3, DetectionMode::Homoscedastic);
  const ProjectionSet b = projection_directions(covs, 3, DetectionMode::Homoscedastic);
  EXPECT_EQ(a.directions, b.directions);
  Eigen::Index arg;
  a.directions.col(0).cwiseAbs().maxCoeff(&arg);
  EXPECT_GT(a.directions(arg, 0), 0.0);
}

TEST(Directions, EstimatedDirectionOrthogonalToEstimatedLoadings) {
  const MultiSeries y = contaminated(1);
  const ProjectionSet ps = projection_directions(lag_cov(y, 0), 4, DetectionMode::Homoscedastic);
  const FactorModel m = estimate_svd(y, 4);
  EXPECT_LT((ps.directions.col(0).transpose() * m.a).norm(), 1e-8);
}

TEST(Detect, SpikeFoundAtItsDate) {
  Vector w = Rng(2).normal_matrix(200, 1);
  w(99) += 10.0 * std::sqrt((w.array() - w.mean()).square().mean());
  const auto ds = detect(single(w), kDefaultKAlpha);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].date, 100);
  EXPECT_GT(ds[0].score, kDefaultKAlpha);
  EXPECT_NEAR(kDefaultKAlpha, 4.4721, 1e-4);
}

TEST(Detect, NoiseFalseAlarmRateBelowChebyshevBound) {
  int alarms = 0;
  for (int r = 0; r < 1000; ++r) {
    Rng rng(stream_seed(3, static_cast<std::uint64_t>(r)));
    if (!detect(single(rng.normal_matrix(200, 1)), 4.47).empty()) ++alarms;
  }
  EXPECT_LE(alarms, 50);
}

TEST(Detect, FlatProjectionSkippedWithWarning) {
  std::vector<std::string> warnings;
  EXPECT_TRUE(detect(single(Vector::Constant(50, 3.0)), 4.47, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_THROW(detect(single(Vector::Zero(5)), 0.0), ArgumentError);
}

TEST(Detect, SharedDateReportedOnceWithLargestScore) {
  ProjectionSet ps;
  ps.directions = Matrix::Identity(2, 2);
  Matrix y = Rng(4).normal_matrix(2, 150) * 0.1;
  y(0, 49) = 5.0;
  y(1, 49) = 9.0;
  ps = project(ps, MultiSeries(y));
  const auto ds = detect(ps, 4.47);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].date, 50);
  EXPECT_EQ(ds[0].direction, 1);
  EXPECT_DOUBLE_EQ(ds[0].score, ps.scores(1)(49));
}

TEST(Detect, PermutationAndScaleInvariance) {
  const MultiSeries y = contaminated(5);
  auto run = [](const MultiSeries& s) {
    return detect(project(projection_directions(lag_cov(s, 0), 4, DetectionMode::Homoscedastic), s), kDefaultKAlpha);
  };
  const auto base = run(y);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Matrix permuted(5, y.t());
  for (int i = 0; i < 5; ++i) permuted.row(i) = y.values().row(perm[static_cast<std::size_t>(i)]);
  const auto p = run(MultiSeries(permuted));
  const auto s = run(MultiSeries(Matrix(3.7 * y.values())));
  EXPECT_EQ(dates_of(base), dates_of(p));
  EXPECT_EQ(dates_of(base), dates_of(s));
  ASSERT_EQ(base.size(), s.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(base[i].score, s[i].score, 1e-8);
    EXPECT_NEAR(base[i].score, p[i].score, 1e-8);
  }
}

TEST(Adjust, NoDatesIsIdentity) {
  const MultiSeries y = clean(6);
  EXPECT_EQ(adjust(y, {}).values(), y.values());
}

TEST(Adjust, InterpolationRestoresConstant) {
  Matrix y = Matrix::Constant(3, 30, 2.5);
  y.col(9).setConstant(40.0);
  y.col(10).setConstant(-7.0);
  const MultiSeries out = adjust(MultiSeries(y), {10, 11}, AdjustStrategy::Interpolate);
  EXPECT_TRUE(out.values().isApprox(Matrix::Constant(3, 30, 2.5)));
}

TEST(Adjust, ForecastNeedsHistory) {
  const MultiSeries y = clean(7);
  EXPECT_THROW(adjust(y, {5}, AdjustStrategy::VarForecast), ArgumentError);
  EXPECT_THROW(adjust(y, {0}), ArgumentError);
  const MultiSeries early = adjust(y, {3});  // backcast from the reversed series
  EXPECT_TRUE(early.values().allFinite());
  EXPECT_EQ(early.values().col(0), y.values().col(0));
  EXPECT_NE(early.values().col(2), y.values().col(2));
}

TEST(Adjust, ForecastMatchesVarPrediction) {
  const MultiSeries y = clean(8);
  const MultiSeries out = adjust(y, {100}, AdjustStrategy::VarForecast);
  const VarFit fit = fit_var(y.values(), 1, DateSet{100});
  EXPECT_LT((out.values().col(99) - fit.predict_after(y.values(), 98)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(out.values().leftCols(99), y.values().leftCols(99));
}

TEST(Adjust, AdjustedCovarianceCloserToTheory) {
  const Vector theory = (Vector(5) << 1.04, 1.29, 1.29, 1.29, 0.29).finished();
  double dirty = 0.0, fixed = 0.0;
  for (int r = 0; r < 100; ++r) {
    const MultiSeries y = contaminated(stream_seed(9, static_cast<std::uint64_t>(r)));
    dirty += (lag_cov(y, 0).gammas[0].diagonal() - theory).norm();
    fixed += (lag_cov(adjust(y, {100}), 0).gammas[0].diagonal() - theory).norm();
  }
  EXPECT_LT(fixed, dirty);
}

TEST(Decompose, WorkedExampleValues) {
  const SimConfig cfg = section7();
  const Decomposition d = decompose_true(cfg.omega, cfg.a);
  const Vector alpha = (Vector(4) << 1.161, -0.903, -0.903, -0.839).finished();
  const Vector zeta = (Vector(5) << 0.3387, -0.6774, 1.3548, -2.7097, 5.4194).finished();
  EXPECT_LT((d.alpha - alpha).cwiseAbs().maxCoeff(), 5e-4);
  EXPECT_LT((d.zeta - zeta).cwiseAbs().maxCoeff(), 5e-4);
}

TEST(Decompose, DegenerateCases) {
  const Matrix a = section7().a;
  const Decomposition inside = decompose_true(a.col(0), a);
  EXPECT_LT((inside.alpha - Vector::Unit(4, 0)).norm(), 1e-12);
  EXPECT_LT(inside.zeta.norm(), 1e-12);
  const Matrix z = Matrix::Identity(5, 5) - a * detail::left_inverse(a);
  const Vector orth = z * Vector::Ones(5);
  const Decomposition outside = decompose_true(orth, a);
  EXPECT_LT(outside.alpha.norm(), 1e-12);
  EXPECT_LT((outside.zeta - orth).norm(), 1e-12);
}

TEST(Decompose, ExactDirectSumOnRandomInputs) {
  Rng rng(10);
  for (int r = 0; r < 20; ++r) {
    const Matrix a = rng.normal_matrix(6, 3);
    const Vector omega = rng.normal_matrix(6, 1);
    const Decomposition d = decompose_true(omega, a);
    EXPECT_LT((a * d.alpha + d.zeta - omega).norm(), 1e-12);
    EXPECT_LT((a.transpose() * d.zeta).norm(), 1e-10);
    const Matrix z = Matrix::Identity(6, 6) - a * detail::left_inverse(a);
    EXPECT_LT((z * a).norm(), 1e-10);
    EXPECT_LT((z * z - z).norm(), 1e-10);
  }
}

TEST(Sizes, ZetaAndTotal) {
  const Matrix a = section7().a;
  const Vector x = (Vector(4) << 0.3, -1, 2, 0.5).finished();
  EXPECT_LT(size_zeta(Vector(a * x), a, x).norm(), 1e-15);
  const Vector zeta = (Vector(5) << 1, 2, 3, 4, 5).finished();
  EXPECT_EQ(total_size(a, Vector::Zero(4), zeta), zeta);
  EXPECT_EQ(total_size(a, Vector::Unit(4, 0), Vector::Zero(5)), Vector(a.col(0)));
}

TEST(SizeAlpha, WhiteNoiseOrderZero) {
  const Vector x = Rng(11).normal_matrix(60, 1);
  const double mean = (x.sum() - x(29)) / 59.0;
  EXPECT_NEAR(size_alpha(x, 30, 0).alpha, x(29) - mean, 1e-12);
}

TEST(SizeAlpha, EndOfSampleUsesLastResidual) {
  const Vector x = Rng(12).normal_matrix(80, 1);
  const double mean = (x.sum() - x(79)) / 79.0;
  const Vector xc = x.array() - mean;
  const ArFit fit = fit_ar(xc, 1, DateSet{80});
  EXPECT_NEAR(size_alpha(x, 80, 1).alpha, xc(79) - fit.phi(0) * xc(78), 1e-12);
}

TEST(SizeAlpha, ArOneMonteCarloUnbiased) {
  double fixed = 0.0, chosen = 0.0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    Rng rng(stream_seed(13, static_cast<std::uint64_t>(r)));
    Vector x = gen_factors_var((Vector(1) << 0.7).finished(), 500, 100, rng).row(0).transpose();
    x(249) += 2.0;
    fixed += size_alpha(x, 250, 1).alpha;
    chosen += size_alpha(x, 250).alpha;
  }
  EXPECT_NEAR(fixed / reps, 2.0, 0.1);
  EXPECT_NEAR(chosen / reps, 2.0, 0.1);
}

TEST(Pipeline, WorkedExampleDetectsLastDate) {
  PipelineConfig cfg;
  cfg.force = true;
  int found = 0, k_right = 0;
  for (int r = 0; r < 20; ++r) {
    const OutlierReport rep = run_pipeline(contaminated(stream_seed(14, static_cast<std::uint64_t>(r))), cfg);
    const auto d = rep.dates();
    if (std::find(d.begin(), d.end(), 100) != d.end()) ++found;
    if (rep.k_estimate == 4) ++k_right;
    ASSERT_TRUE(rep.model.has_value());
    for (const DateSize& s : rep.sizes) {
      EXPECT_LT((rep.model->a.transpose() * s.zeta_hat).norm(), 1e-8);
      EXPECT_LT((rep.model->a * s.alpha_hat + s.zeta_hat - s.omega_hat).norm(), 1e-12);
    }
  }
  EXPECT_GE(found, 17);
  EXPECT_GE(k_right, 15);
}

TEST(Pipeline, CleanDataRarelyFlagged) {
  PipelineConfig cfg;
  cfg.force = true;
  int flagged = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r)
    if (!run_pipeline(clean(stream_seed(15, static_cast<std::uint64_t>(r))), cfg).detections.empty()) ++flagged;
  EXPECT_LE(flagged, reps / 20);
}

TEST(Pipeline, AdequacyRejectionAbortsWithoutForce) {
  // A pure one-step lag between two series has a complex cross-spectrum.
  Rng rng(16);
  const Matrix e = rng.normal_matrix(3, 401);
  Matrix y(3, 400);
  for (Eigen::Index s = 0; s < 400; ++s) {
    y(0, s) = e(0, s + 1);
    y(1, s) = e(0, s) + 0.2 * e(1, s);
    y(2, s) = e(2, s);
  }
  PipelineConfig cfg;
  cfg.k = 1;
  const OutlierReport rep = run_pipeline(MultiSeries(y), cfg);
  EXPECT_TRUE(rep.adequacy_rejected);
  EXPECT_TRUE(rep.aborted);
  EXPECT_FALSE(rep.model.has_value());
  cfg.force = true;
  const OutlierReport forced = run_pipeline(MultiSeries(y), cfg);
  EXPECT_FALSE(forced.aborted);
  EXPECT_TRUE(forced.model.has_value());
}

TEST(Modes, NamesRoundTrip) {
  EXPECT_EQ(parse_detection_mode("hetero"), DetectionMode::Heteroscedastic);
  EXPECT_EQ(parse_adjust_strategy(to_string(AdjustStrategy::Interpolate)), AdjustStrategy::Interpolate);
  EXPECT_THROW(parse_detection_mode("both"), ConfigError);
}
