#pragma once

// Outlier detection by projecting the panel onto directions orthogonal to the
// loading space, imputation at flagged dates, and the decomposition of each
// outlier into a factor part A alpha and a structural part zeta.

#include "odfm/adequacy.hpp"
#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/factors.hpp"
#include "odfm/moments.hpp"
#include "odfm/var.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace odfm {

/// sqrt(1 / 0.05): the Tchebychev cutoff for a 5% two-sided tail.
inline const double kDefaultKAlpha = std::sqrt(20.0);

enum class DetectionMode { Homoscedastic, Heteroscedastic };

inline std::string to_string(DetectionMode m) {
  return m == DetectionMode::Homoscedastic ? "homoscedastic" : "heteroscedastic";
}

inline DetectionMode parse_detection_mode(const std::string& s) {
  if (s == "homoscedastic" || s == "homo") return DetectionMode::Homoscedastic;
  if (s == "heteroscedastic" || s == "hetero") return DetectionMode::Heteroscedastic;
  throw ConfigError("unknown detection mode '" + s + "'");
}

/// Directions z (columns), their projections w = z'Y (rows) and the
/// per-projection mean and population standard deviation.
struct ProjectionSet {
  Matrix directions;  // N x d, unit columns
  Vector eigenvalues; // eigenvalue paired with each direction
  Matrix series;      // d x T
  Vector mean;
  Vector sd;
  DetectionMode source = DetectionMode::Homoscedastic;

  Eigen::Index count() const { return directions.cols(); }

  /// |w_t - mean| / sd for projection i; zeros when the projection is flat.
  Vector scores(Eigen::Index i) const {
    if (!(sd(i) > 0)) return Vector::Zero(series.cols());
    return ((series.row(i).array() - mean(i)).abs() / sd(i)).matrix().transpose();
  }
};

/// N - K directions: the smallest-eigenvalue eigenvectors of Gamma(0)
/// (homoscedastic), or the eigenvectors of the symmetrized Gamma(1) with
/// eigenvalues smallest in absolute value (heteroscedastic). Ordered from the
/// most to the least informative. `count` overrides N - K.
inline ProjectionSet projection_directions(const LagCovSet& covs, int k, DetectionMode mode,
                                           std::optional<int> count = std::nullopt) {
  const Eigen::Index n = covs.gammas.at(0).rows();
  if (k < 0 || k >= n) throw ArgumentError("projection_directions: need 0 <= K < N");
  const Eigen::Index d = count ? *count : n - k;
  if (d < 1 || d > n) throw ArgumentError("projection_directions: direction count out of range");
  ProjectionSet ps;
  ps.source = mode;
  ps.directions.resize(n, d);
  ps.eigenvalues.resize(d);
  if (mode == DetectionMode::Homoscedastic) {
    const EigenSystem es = sym_eigen(covs.gammas[0]);
    for (Eigen::Index i = 0; i < d; ++i) {
      ps.directions.col(i) = es.vectors.col(n - 1 - i);
      ps.eigenvalues(i) = es.values(n - 1 - i);
    }
  } else {
    if (covs.max_lag() < 1) throw ArgumentError("heteroscedastic directions need Gamma(1)");
    const Matrix& g1 = covs.gammas[1];
    const EigenSystem es = sym_eigen(0.5 * (g1 + g1.transpose()));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return std::abs(es.values(a)) < std::abs(es.values(b)); });
    for (Eigen::Index i = 0; i < d; ++i) {
      ps.directions.col(i) = es.vectors.col(order[static_cast<std::size_t>(i)]);
      ps.eigenvalues(i) = es.values(order[static_cast<std::size_t>(i)]);
    }
  }
  return ps;
}

/// Fills the projection series and their standardization for a panel.
inline ProjectionSet project(ProjectionSet ps, const MultiSeries& series) {
  if (ps.directions.rows() != series.n()) throw ArgumentError("project: dimension mismatch");
  ps.series = ps.directions.transpose() * series.values();
  ps.mean = ps.series.rowwise().mean();
  const Matrix dev = ps.series.colwise() - ps.mean;
  ps.sd = (dev.rowwise().squaredNorm() / static_cast<double>(series.t())).cwiseSqrt();
  for (Eigen::Index i = 0; i < ps.count(); ++i) {
    const double top = dev.row(i).cwiseAbs().maxCoeff();
    if (ps.sd(i) <= 1e-12 * top || top == 0.0) ps.sd(i) = 0.0;
  }
  return ps;
}

struct Detection {
  Eigen::Index date = 0;  // 1-based
  Eigen::Index direction = 0;
  double score = 0.0;
  int round = 1;
};

/// Each projection flags its largest standardized excursion when it exceeds
/// k_alpha; dates flagged by several projections are reported once with the
/// largest score. Flat projections are skipped and noted in `warnings`.
inline std::vector<Detection> detect(const ProjectionSet& ps, double k_alpha,
                                     std::vector<std::string>* warnings = nullptr) {
  if (!(k_alpha > 0)) throw ArgumentError("detect: k_alpha must be positive");
  std::map<Eigen::Index, Detection> by_date;
  for (Eigen::Index i = 0; i < ps.count(); ++i) {
    if (!(ps.sd(i) > 0)) {
      if (warnings) warnings->push_back("projection " + std::to_string(i) + " has zero variance; skipped");
      continue;
    }
    const Vector s = ps.scores(i);
    Eigen::Index arg = 0;
    const double top = s.maxCoeff(&arg);
    if (top > k_alpha) {
      Detection d{arg + 1, i, top, 1};
      auto [it, fresh] = by_date.emplace(d.date, d);
      if (!fresh && top > it->second.score) it->second = d;
    }
  }
  std::vector<Detection> out;
  for (auto& [date, d] : by_date) out.push_back(d);
  return out;
}

// ---------------------------------------------------------------------------
// Imputation

enum class AdjustStrategy { VarForecast, Interpolate, Auto };

inline std::string to_string(AdjustStrategy s) {
  switch (s) {
    case AdjustStrategy::VarForecast: return "var-forecast";
    case AdjustStrategy::Interpolate: return "interpolate";
    case AdjustStrategy::Auto: return "auto";
  }
  return "auto";
}

inline AdjustStrategy parse_adjust_strategy(const std::string& s) {
  if (s == "var-forecast" || s == "var") return AdjustStrategy::VarForecast;
  if (s == "interpolate") return AdjustStrategy::Interpolate;
  if (s == "auto") return AdjustStrategy::Auto;
  throw ConfigError("unknown adjust strategy '" + s + "'");
}

namespace detail {

inline bool var_history_ok(Eigen::Index t0, Eigen::Index n, int p) { return t0 - 1 >= p * n + 10; }

// One-step forecasts in ascending date order; each forecast sees earlier
// replacements.
inline void forecast_dates(Matrix& y, const std::vector<Eigen::Index>& dates, const DateSet& flagged, int p) {
  if (dates.empty()) return;
  const VarFit fit = fit_var(y, p, flagged);
  for (Eigen::Index t0 : dates) {
    if (t0 - 1 < p) throw ArgumentError("insufficient history for a VAR forecast at t = " + std::to_string(t0));
    y.col(t0 - 1) = fit.predict_after(y, t0 - 2);
  }
}

// Backcasts from a VAR fitted to the time-reversed panel, latest date first.
inline void backcast_dates(Matrix& y, std::vector<Eigen::Index> dates, const DateSet& flagged, int p) {
  if (dates.empty()) return;
  const Eigen::Index t = y.cols();
  Matrix rev = y.rowwise().reverse();
  DateSet rev_flagged;
  for (Eigen::Index d : flagged) rev_flagged.insert(t + 1 - d);
  const VarFit fit = fit_var(rev, p, rev_flagged);
  std::sort(dates.rbegin(), dates.rend());
  for (Eigen::Index t0 : dates) {
    const Eigen::Index r0 = t + 1 - t0;
    if (r0 - 1 < p) throw ArgumentError("insufficient data for a VAR backcast at t = " + std::to_string(t0));
    rev.col(r0 - 1) = fit.predict_after(rev, r0 - 2);
    y.col(t0 - 1) = rev.col(r0 - 1);
  }
}

}  // namespace detail

/// Replaces the observations at the flagged dates.
///  - var-forecast: one-step VAR(p) prediction, the VAR fitted by least
///    squares on rows that avoid flagged dates; needs p N + 10 earlier
///    observations per date.
///  - interpolate: mean of the nearest non-flagged columns on either side;
///    dates at either end of the sample fall back to VAR prediction.
///  - auto: forecast where the history suffices, otherwise backcast from the
///    reversed series, otherwise interpolate.
inline MultiSeries adjust(const MultiSeries& series, const std::vector<Eigen::Index>& dates,
                          AdjustStrategy strategy = AdjustStrategy::Auto, int var_order = 1) {
  if (dates.empty()) return series;
  const Eigen::Index t = series.t();
  const Eigen::Index n = series.n();
  DateSet flagged;
  for (Eigen::Index d : dates) {
    if (d < 1 || d > t) throw ArgumentError("adjust: date " + std::to_string(d) + " out of range");
    flagged.insert(d);
  }
  Matrix y = series.values();
  std::vector<Eigen::Index> forecast, backcast, interp;
  for (Eigen::Index d : flagged) {
    const bool history = detail::var_history_ok(d, n, var_order);
    const bool future = detail::var_history_ok(t + 1 - d, n, var_order);
    switch (strategy) {
      case AdjustStrategy::VarForecast:
        if (!history)
          throw ArgumentError("insufficient history for a VAR(" + std::to_string(var_order) + ") forecast at t = " +
                              std::to_string(d) + "; need " + std::to_string(var_order * n + 10) +
                              " earlier observations");
        forecast.push_back(d);
        break;
      case AdjustStrategy::Interpolate: {
        Eigen::Index lo = d - 1, hi = d + 1;
        while (lo >= 1 && flagged.count(lo)) --lo;
        while (hi <= t && flagged.count(hi)) ++hi;
        if (lo >= 1 && hi <= t)
          interp.push_back(d);
        else if (lo < 1)
          backcast.push_back(d);
        else
          forecast.push_back(d);
        break;
      }
      case AdjustStrategy::Auto:
        if (history)
          forecast.push_back(d);
        else if (future)
          backcast.push_back(d);
        else
          interp.push_back(d);
        break;
    }
  }
  for (Eigen::Index d : interp) {
    Eigen::Index lo = d - 1, hi = d + 1;
    while (lo >= 1 && flagged.count(lo)) --lo;
    while (hi <= t && flagged.count(hi)) ++hi;
    if (lo < 1 || hi > t) throw ArgumentError("cannot interpolate at t = " + std::to_string(d));
    y.col(d - 1) = 0.5 * (series.values().col(lo - 1) + series.values().col(hi - 1));
  }
  detail::forecast_dates(y, forecast, flagged, var_order);
  detail::backcast_dates(y, backcast, flagged, var_order);
  return series.with_values(std::move(y));
}

// ---------------------------------------------------------------------------
// Outlier sizes

struct Decomposition {
  Vector alpha;  // (A'A)^{-1} A' omega
  Vector zeta;   // (I - A (A'A)^{-1} A') omega
};

inline Decomposition decompose_true(const Vector& omega, const Matrix& a) {
  if (omega.size() != a.rows()) throw ArgumentError("decompose_true: dimension mismatch");
  Decomposition d;
  d.alpha = detail::left_inverse(a) * omega;
  d.zeta = omega - a * d.alpha;
  return d;
}

/// zeta_hat = y_t0 - A x_t0.
inline Vector size_zeta(const Vector& y_t0, const Matrix& a, const Vector& x_t0) {
  if (y_t0.size() != a.rows() || x_t0.size() != a.cols()) throw ArgumentError("size_zeta: dimension mismatch");
  return y_t0 - a * x_t0;
}

inline Vector size_zeta(const Vector& y_t0, const FactorModel& model, Eigen::Index t0) {
  if (t0 < 1 || t0 > model.x.cols()) throw ArgumentError("size_zeta: no factor scores at t0");
  return size_zeta(y_t0, model.a, model.x.col(t0 - 1));
}

/// omega_hat = A alpha_hat + zeta_hat.
inline Vector total_size(const Matrix& a, const Vector& alpha_hat, const Vector& zeta_hat) {
  if (a.cols() != alpha_hat.size() || a.rows() != zeta_hat.size())
    throw ArgumentError("total_size: dimension mismatch");
  return a * alpha_hat + zeta_hat;
}

struct AlphaEstimate {
  double alpha = 0.0;
  int order = 0;
  bool fell_back = false;  // unstable fit replaced by AR(1)
};

inline constexpr int kMaxArOrder = 4;

/// Additive-outlier magnitude at t0 for one factor series. The series is
/// demeaned without t0, an AR(p) is fitted by least squares on rows that do
/// not involve t0, and with pi(B) = 1 - phi_1 B - ... - phi_p B^p and
/// residuals e_t = pi(B) x_t the estimate is
///   sum_{k=0}^{min(p, T-t0)} pi_k e_{t0+k} / sum pi_k^2.
/// `order` fixes p (0 allowed); without it p is chosen by AIC over 1..4.
inline AlphaEstimate size_alpha(const Vector& x, Eigen::Index t0, std::optional<int> order = std::nullopt) {
  const Eigen::Index t = x.size();
  if (t0 < 1 || t0 > t) throw ArgumentError("size_alpha: t0 out of range");
  if (order && *order < 0) throw ArgumentError("size_alpha: negative AR order");
  const double mean = (x.sum() - x(t0 - 1)) / static_cast<double>(t - 1);
  const Vector xc = x.array() - mean;
  const DateSet skip{t0};

  AlphaEstimate est;
  ArFit fit;
  if (order) {
    if (t - *order <= 20) throw ArgumentError("size_alpha: need T - p > 20");
    est.order = *order;
    if (*order > 0) fit = fit_ar(xc, *order, skip);
  } else {
    const int max_p = static_cast<int>(std::min<Eigen::Index>(kMaxArOrder, t - 21));
    if (max_p < 1) throw ArgumentError("size_alpha: series too short for an AR fit");
    double best = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= max_p; ++p) {
      // Common estimation sample so the criteria are comparable.
      const ArFit f = fit_ar(xc, p, skip, max_p + 1);
      const double aic = static_cast<double>(f.rows) * std::log(std::max(f.sigma2, 1e-300)) + 2.0 * p;
      if (aic < best) {
        best = aic;
        est.order = p;
      }
    }
    fit = fit_ar(xc, est.order, skip);
  }
  if (est.order > 0 && !ar_stationary(fit.phi)) {
    est.order = 1;
    est.fell_back = true;
    fit = fit_ar(xc, 1, skip);
  }
  const int p = est.order;
  Vector pi(p + 1);
  pi(0) = 1.0;
  for (int k = 1; k <= p; ++k) pi(k) = -fit.phi(k - 1);
  auto resid = [&](Eigen::Index d) {  // e_d with lags truncated at the sample start
    double e = xc(d - 1);
    for (int k = 1; k <= p && d - k >= 1; ++k) e -= fit.phi(k - 1) * xc(d - 1 - k);
    return e;
  };
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= p && t0 + k <= t; ++k) {
    num += pi(k) * resid(t0 + k);
    den += pi(k) * pi(k);
  }
  est.alpha = num / den;
  return est;
}

// ---------------------------------------------------------------------------
// Full procedure

struct PipelineConfig {
  double k_alpha = kDefaultKAlpha;
  DetectionMode mode = DetectionMode::Homoscedastic;
  std::optional<int> n_directions;  // default N - K
  int max_rounds = 10;
  bool recompute_directions = false;
  AdjustStrategy strategy = AdjustStrategy::Auto;
  int var_order = 1;
  AdequacyOptions adequacy;
  bool force = false;
  double select_alpha = 0.05;
  bool correct_floor = true;
  std::optional<int> k;  // overrides automatic selection for detection and estimation
  Method estimator = Method::Svd;
  int jd_lags = 0;  // 0 means H = K
  JointDiagOptions jd;
  MlOptions ml;
  std::optional<int> ar_order;  // default: AIC over 1..4
};

/// Size estimate at one detected date.
struct DateSize {
  Eigen::Index date = 0;
  Vector omega_hat;
  Vector zeta_hat;
  Vector alpha_hat;
  std::vector<int> ar_orders;
};

struct RoundLog {
  int round = 0;
  std::vector<Detection> detections;  // new in this round
};

struct OutlierReport {
  std::vector<Detection> detections;  // ascending date
  std::vector<DateSize> sizes;        // one per detection, same order
  double k_alpha = kDefaultKAlpha;
  DetectionMode mode = DetectionMode::Homoscedastic;
  int iterations = 0;
  int k_detect = 0;
  int k_estimate = 0;
  Vector eigenvalues;  // of the observed Gamma(0), descending
  ProjectionSet projections;  // directions with projections of the observed panel
  std::optional<AdequacyResult> adequacy;
  bool adequacy_rejected = false;
  bool aborted = false;  // adequacy rejected without force: no estimation done
  std::optional<FactorModel> model;
  std::optional<MultiSeries> adjusted;
  std::vector<RoundLog> rounds;
  std::vector<std::string> warnings;

  /// Size estimate of the highest-scoring detection, if any.
  const DateSize* primary() const {
    if (sizes.empty()) return nullptr;
    std::size_t best = 0;
    for (std::size_t i = 1; i < detections.size(); ++i)
      if (detections[i].score > detections[best].score) best = i;
    return &sizes[best];
  }

  std::vector<Eigen::Index> dates() const {
    std::vector<Eigen::Index> out;
    for (const auto& d : detections) out.push_back(d.date);
    return out;
  }
};

namespace detail {

inline int capped_k(const Vector& eigenvalues, const PipelineConfig& cfg, Eigen::Index n) {
  if (cfg.k) {
    if (*cfg.k < 1 || *cfg.k >= n) throw ConfigError("K must satisfy 1 <= K < N");
    return *cfg.k;
  }
  return std::min(select_k(eigenvalues, cfg.select_alpha, cfg.correct_floor), static_cast<int>(n - 1));
}

}  // namespace detail

/// Detection rounds, adequacy check, estimation and size decomposition.
///
/// Directions come from the observed Gamma(0) (or Gamma(1)) once; each round
/// projects the current adjusted panel onto them, flags new dates, and
/// re-imputes the observed panel at every flagged date. Rounds stop when
/// nothing new is flagged or after max_rounds. With recompute_directions the
/// directions are re-derived from the adjusted panel every round.
inline OutlierReport run_pipeline(const MultiSeries& series, const PipelineConfig& cfg = {}) {
  if (cfg.max_rounds < 1) throw ConfigError("max_rounds must be at least 1");
  const Eigen::Index n = series.n();
  if (n < 2) throw ArgumentError("run_pipeline: need at least two components");
  OutlierReport rep;
  rep.k_alpha = cfg.k_alpha;
  rep.mode = cfg.mode;

  const LagCovSet covs = lag_cov(series, 1);
  rep.eigenvalues = sym_eigen(covs.gammas[0]).values;
  rep.k_detect = detail::capped_k(rep.eigenvalues, cfg, n);
  const ProjectionSet base = projection_directions(covs, rep.k_detect, cfg.mode, cfg.n_directions);
  rep.projections = project(base, series);

  std::vector<Eigen::Index> flagged;
  MultiSeries adjusted = series;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    rep.iterations = round;
    ProjectionSet dirs = base;
    if (cfg.recompute_directions && round > 1)
      dirs = projection_directions(lag_cov(adjusted, 1), rep.k_detect, cfg.mode, cfg.n_directions);
    const ProjectionSet ps = project(std::move(dirs), adjusted);
    RoundLog log{round, {}};
    for (Detection d : detect(ps, cfg.k_alpha, &rep.warnings)) {
      if (std::find(flagged.begin(), flagged.end(), d.date) != flagged.end()) continue;
      d.round = round;
      log.detections.push_back(d);
    }
    rep.rounds.push_back(log);
    if (log.detections.empty()) break;
    for (const auto& d : log.detections) {
      flagged.push_back(d.date);
      rep.detections.push_back(d);
    }
    adjusted = adjust(series, flagged, cfg.strategy, cfg.var_order);
  }
  std::sort(rep.detections.begin(), rep.detections.end(),
            [](const Detection& a, const Detection& b) { return a.date < b.date; });
  rep.adjusted = adjusted;

  rep.adequacy = adequacy_test(adjusted, cfg.adequacy);
  rep.adequacy_rejected = rep.adequacy->reject_any;
  if (rep.adequacy_rejected && !cfg.force) {
    rep.aborted = true;
    return rep;
  }

  const LagCovSet adj_covs = lag_cov(adjusted, 0);
  rep.k_estimate = detail::capped_k(sym_eigen(adj_covs.gammas[0]).values, cfg, n);
  FactorModel model = estimate(adjusted, rep.k_estimate, cfg.estimator, cfg.jd_lags, cfg.jd, cfg.ml);
  if (model.x.size() == 0 && detail::full_rank(model.a)) model.x = factor_scores(detail::centered_values(adjusted), model.a);

  if (!rep.detections.empty()) {
    if (!detail::full_rank(model.a)) throw EstimationError("run_pipeline: estimated loadings are rank deficient");
    const Vector mu = adj_covs.mean;
    const Matrix b = model.b();
    const Matrix factors = b * (adjusted.values().colwise() - mu);
    for (const auto& d : rep.detections) {
      DateSize s;
      s.date = d.date;
      const Vector y0 = series.at(d.date) - mu;
      const Vector x0 = b * y0;
      s.zeta_hat = size_zeta(y0, model.a, x0);
      Matrix f = factors;
      f.col(d.date - 1) = x0;
      s.alpha_hat.resize(model.k);
      for (int r = 0; r < model.k; ++r) {
        const AlphaEstimate ae = size_alpha(f.row(r).transpose(), d.date, cfg.ar_order);
        s.alpha_hat(r) = ae.alpha;
        s.ar_orders.push_back(ae.order);
      }
      s.omega_hat = total_size(model.a, s.alpha_hat, s.zeta_hat);
      rep.sizes.push_back(std::move(s));
    }
  }
  rep.model = std::move(model);
  return rep;
}

}  // namespace odfm
