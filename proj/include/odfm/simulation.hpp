#pragma once

// Data generators for the factor model and the Monte Carlo harness that
// drives the full detection pipeline over many seeded replications.

#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/factors.hpp"
#include "odfm/moments.hpp"
#include "odfm/outliers.hpp"
#include "odfm/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace odfm {

/// Innovation variance rule for ARMA(1,1) factors.
enum class InnovationRule {
  Exact,         // (1 - phi^2) / (1 + theta^2 - 2 phi theta): unit factor variance
  PaperLiteral   // 1 - theta phi - (phi - theta) theta, diagonal case
};

inline std::string to_string(InnovationRule r) { return r == InnovationRule::Exact ? "exact" : "paper-literal"; }

inline InnovationRule parse_innovation_rule(const std::string& s) {
  if (s == "exact") return InnovationRule::Exact;
  if (s == "paper-literal" || s == "literal") return InnovationRule::PaperLiteral;
  throw ConfigError("unknown innovation rule '" + s + "'");
}

inline double innovation_variance(double phi, double theta, InnovationRule rule) {
  if (rule == InnovationRule::Exact) return (1.0 - phi * phi) / (1.0 + theta * theta - 2.0 * phi * theta);
  return 1.0 - theta * phi - (phi - theta) * theta;
}

struct SimConfig {
  std::string name = "custom";
  int n = 0;
  int k = 0;
  int t = 0;
  int burn = 100;
  Vector phi;    // diagonal of Phi
  Vector theta;  // diagonal of Theta (zero for pure AR factors)
  Matrix a;      // N x K
  double sigma_eta = 0.2;
  Vector omega;  // N, zero for clean data
  std::vector<Eigen::Index> dates;
  int replications = 1;
  std::uint64_t seed = 1;
  InnovationRule innovation = InnovationRule::Exact;
  bool rescale_factors = false;  // divide each factor series by its sample sd
  PipelineConfig pipeline;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

inline void SimConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("simulation config: " + m); };
  if (n < 2 || k < 1 || k >= n) fail("need N >= 2 and 1 <= K < N");
  if (t < 2) fail("T must be at least 2");
  if (burn < 100) fail("burn-in must be at least 100");
  if (replications < 1) fail("replications must be at least 1");
  if (phi.size() != k) fail("Phi must have K diagonal entries");
  if (theta.size() != 0 && theta.size() != k) fail("Theta must have K diagonal entries");
  for (Eigen::Index i = 0; i < phi.size(); ++i)
    if (!(std::abs(phi(i)) < 1)) fail("Phi is not stationary");
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!(std::abs(theta(i)) < 1)) fail("Theta is not invertible");
  if (a.rows() != n || a.cols() != k) fail("A must be N x K");
  if (!detail::full_rank(a)) fail("A must have full column rank");
  if (!(sigma_eta >= 0)) fail("sigma_eta must be nonnegative");
  if (omega.size() != 0 && omega.size() != n) fail("omega must have N entries");
  for (Eigen::Index d : dates)
    if (d < 1 || d > t) fail("outlier date out of range");
}

// ---------------------------------------------------------------------------
// Generators

/// x_t = Phi x_{t-1} + eps_t - Theta eps_{t-1}, K x T after discarding `burn`
/// initial values. Innovations per factor have the variance set by `rule`.
inline Matrix gen_factors_varma(const Vector& phi, const Vector& theta, int t, int burn, Rng& rng,
                                InnovationRule rule = InnovationRule::Exact) {
  const Eigen::Index k = phi.size();
  const Vector th = theta.size() == 0 ? Vector::Zero(k) : theta;
  if (th.size() != k) throw ArgumentError("gen_factors_varma: Phi and Theta sizes differ");
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(std::abs(phi(i)) < 1)) throw ArgumentError("gen_factors_varma: non-stationary Phi");
    if (!(std::abs(th(i)) < 1)) throw ArgumentError("gen_factors_varma: non-invertible Theta");
  }
  if (t < 1 || burn < 0) throw ArgumentError("gen_factors_varma: bad lengths");
  Vector sd(k);
  for (Eigen::Index i = 0; i < k; ++i) sd(i) = std::sqrt(innovation_variance(phi(i), th(i), rule));
  Matrix out(k, t);
  Vector x = Vector::Zero(k);
  Vector eps_prev = Vector::Zero(k);
  for (int s = 0; s < burn + t; ++s) {
    Vector eps(k);
    for (Eigen::Index i = 0; i < k; ++i) eps(i) = sd(i) * rng.normal();
    x = phi.cwiseProduct(x) + eps - th.cwiseProduct(eps_prev);
    eps_prev = eps;
    if (s >= burn) out.col(s - burn) = x;
  }
  return out;
}

/// x_t = Phi x_{t-1} + eps_t with innovation variance 1 - Phi_ii^2.
inline Matrix gen_factors_var(const Vector& phi, int t, int burn, Rng& rng) {
  return gen_factors_varma(phi, Vector::Zero(phi.size()), t, burn, rng, InnovationRule::Exact);
}

inline Matrix gen_factors_var(const Vector& phi, int t, int burn, std::uint64_t seed) {
  Rng rng(seed);
  return gen_factors_var(phi, t, burn, rng);
}

/// Each row divided by its sample standard deviation (divisor T).
inline Matrix rescale_unit_variance(Matrix x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).mean();
    const double sd = std::sqrt((x.row(i).array() - m).square().mean());
    if (sd > 0) x.row(i) /= sd;
  }
  return x;
}

/// y = A X + eta with iid N(0, sigma_eta^2) noise, plus omega at each date.
inline MultiSeries gen_observed(const Matrix& a, const Matrix& factors, double sigma_eta, const Vector& omega,
                                const std::vector<Eigen::Index>& dates, Rng& rng) {
  if (a.cols() != factors.rows()) throw ArgumentError("gen_observed: A and factors disagree on K");
  if (omega.size() != 0 && omega.size() != a.rows()) throw ArgumentError("gen_observed: omega has the wrong length");
  Matrix y = a * factors + sigma_eta * rng.normal_matrix(a.rows(), factors.cols());
  for (Eigen::Index d : dates) {
    if (d < 1 || d > y.cols()) throw ArgumentError("gen_observed: date out of range");
    if (omega.size() != 0) y.col(d - 1) += omega;
  }
  return MultiSeries(std::move(y));
}

inline MultiSeries gen_observed(const Matrix& a, const Matrix& factors, double sigma_eta, const Vector& omega,
                                const std::vector<Eigen::Index>& dates, std::uint64_t seed) {
  Rng rng(seed);
  return gen_observed(a, factors, sigma_eta, omega, dates, rng);
}

/// y_t = sum_{u=1}^{s} psi_u eps_{t-u} + eta_t with eps ~ N(0, I_K).
inline MultiSeries gen_ma(const std::vector<Matrix>& psi, int t, double sigma_eta, Rng& rng) {
  if (psi.empty()) throw ArgumentError("gen_ma: need at least one loading matrix");
  const Eigen::Index n = psi[0].rows();
  const Eigen::Index k = psi[0].cols();
  const int s = static_cast<int>(psi.size());
  const Matrix eps = rng.normal_matrix(k, t + s);
  Matrix y = sigma_eta * rng.normal_matrix(n, t);
  for (int c = 0; c < t; ++c)
    for (int u = 1; u <= s; ++u) y.col(c) += psi[static_cast<std::size_t>(u - 1)] * eps.col(c + s - u);
  return MultiSeries(std::move(y));
}

/// One draw of the configured design (factors first, then noise, from the
/// same stream).
inline MultiSeries simulate_once(const SimConfig& cfg, Rng& rng) {
  Matrix x = gen_factors_varma(cfg.phi, cfg.theta, cfg.t, cfg.burn, rng, cfg.innovation);
  if (cfg.rescale_factors) x = rescale_unit_variance(std::move(x));
  return gen_observed(cfg.a, x, cfg.sigma_eta, cfg.omega, cfg.dates, rng);
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct ReplicationResult {
  int index = 0;
  bool failed = false;
  std::string error;
  std::vector<Eigen::Index> detected;
  std::vector<bool> hit;      // per injected date
  bool all_hit = false;
  bool false_detection = false;
  int k_hat = 0;
  bool adequacy_rejected = false;
  std::optional<double> zeta_error;   // mean over injected dates of ||zeta_hat - zeta||
  std::optional<double> omega_error;  // mean over injected dates of ||omega_hat - omega||
  std::optional<Vector> omega_bias;   // mean over injected dates of omega_hat - omega
  std::vector<double> scores;         // score per injected date (0 if missed)
};

struct RateSummary {
  double percent = 0.0;
  double block_se = 0.0;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;
};

struct MonteCarloSummary {
  std::string name;
  int replications = 0;
  int failures = 0;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> dates;
  std::vector<RateSummary> per_date;
  RateSummary whole;  // every injected date detected
  RateSummary false_detection;
  RateSummary adequacy_rejection;
  std::map<int, int> k_table;
  MeanSd zeta_error;
  MeanSd omega_error;
  Vector bias_mean;  // per component, over correctly identified replications
  Vector bias_sd;
  double mean_bias = 0.0;  // bias averaged over components
  double mean_sd = 0.0;    // sd averaged over components
  int groups = 0;
  std::string normal_method = kNormalMethod;
  std::vector<ReplicationResult> runs;
};

/// Worker count: ODFM_THREADS when set, else the hardware concurrency.
inline unsigned worker_count(std::size_t jobs) {
  unsigned w = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ODFM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) w = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(jobs, 1)));
}

/// Runs f(i) for i in [0, count) on a worker pool. Results must be written by
/// index so the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t count, F&& f, unsigned workers = 0) {
  if (workers == 0) workers = worker_count(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) f(i);
    });
  for (auto& th : pool) th.join();
}

inline ReplicationResult run_replication(const SimConfig& cfg, int index, const Decomposition& truth) {
  ReplicationResult r;
  r.index = index;
  r.hit.assign(cfg.dates.size(), false);
  r.scores.assign(cfg.dates.size(), 0.0);
  try {
    Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    const MultiSeries y = simulate_once(cfg, rng);
    PipelineConfig pc = cfg.pipeline;
    pc.force = true;
    const OutlierReport rep = run_pipeline(y, pc);
    r.detected = rep.dates();
    r.k_hat = rep.k_estimate;
    r.adequacy_rejected = rep.adequacy_rejected;
    for (std::size_t i = 0; i < cfg.dates.size(); ++i) {
      for (std::size_t j = 0; j < rep.detections.size(); ++j)
        if (rep.detections[j].date == cfg.dates[i]) {
          r.hit[i] = true;
          r.scores[i] = rep.detections[j].score;
        }
    }
    r.all_hit = !cfg.dates.empty() && std::all_of(r.hit.begin(), r.hit.end(), [](bool b) { return b; });
    for (Eigen::Index d : r.detected)
      if (std::find(cfg.dates.begin(), cfg.dates.end(), d) == cfg.dates.end()) r.false_detection = true;
    if (r.all_hit && cfg.omega.size() == cfg.n) {
      double ze = 0.0, oe = 0.0;
      Vector bias = Vector::Zero(cfg.n);
      for (Eigen::Index d : cfg.dates) {
        const auto it = std::find_if(rep.sizes.begin(), rep.sizes.end(), [&](const DateSize& s) { return s.date == d; });
        ze += (it->zeta_hat - truth.zeta).norm();
        oe += (it->omega_hat - cfg.omega).norm();
        bias += it->omega_hat - cfg.omega;
      }
      const double m = static_cast<double>(cfg.dates.size());
      r.zeta_error = ze / m;
      r.omega_error = oe / m;
      r.omega_bias = bias / m;
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

namespace detail {

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  out.count = static_cast<int>(v.size());
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double q = 0.0;
    for (double x : v) q += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(q / static_cast<double>(v.size() - 1));
  }
  return out;
}

inline constexpr int kBlockGroups = 40;

// Percentage over all replications and the standard deviation of the
// percentages over 40 consecutive equal groups (leftover replications are
// counted in the percentage only).
template <class Pred>
RateSummary block_rate(const std::vector<ReplicationResult>& runs, Pred pred) {
  RateSummary out;
  if (runs.empty()) return out;
  std::size_t hits = 0;
  for (const auto& r : runs) hits += pred(r) ? 1 : 0;
  out.percent = 100.0 * static_cast<double>(hits) / static_cast<double>(runs.size());
  const std::size_t size = runs.size() / kBlockGroups;
  if (size == 0) return out;
  std::vector<double> pct;
  for (int g = 0; g < kBlockGroups; ++g) {
    std::size_t h = 0;
    for (std::size_t i = 0; i < size; ++i) h += pred(runs[g * size + i]) ? 1 : 0;
    pct.push_back(100.0 * static_cast<double>(h) / static_cast<double>(size));
  }
  out.block_se = mean_sd(pct).sd;
  return out;
}

}  // namespace detail

inline MonteCarloSummary monte_carlo(const SimConfig& cfg, unsigned workers = 0) {
  cfg.validate();
  const Decomposition truth =
      decompose_true(cfg.omega.size() == cfg.n ? cfg.omega : Vector(Vector::Zero(cfg.n)), cfg.a);
  MonteCarloSummary s;
  s.name = cfg.name;
  s.replications = cfg.replications;
  s.seed = cfg.seed;
  s.dates = cfg.dates;
  s.runs.resize(static_cast<std::size_t>(cfg.replications));
  parallel_for(
      s.runs.size(), [&](std::size_t i) { s.runs[i] = run_replication(cfg, static_cast<int>(i), truth); }, workers);

  std::vector<ReplicationResult> ok;
  for (const auto& r : s.runs) {
    if (r.failed)
      ++s.failures;
    else
      ok.push_back(r);
  }
  s.groups = ok.size() >= static_cast<std::size_t>(detail::kBlockGroups) ? detail::kBlockGroups : 0;
  for (std::size_t i = 0; i < cfg.dates.size(); ++i)
    s.per_date.push_back(detail::block_rate(ok, [i](const ReplicationResult& r) { return bool(r.hit[i]); }));
  s.whole = detail::block_rate(ok, [](const ReplicationResult& r) { return r.all_hit; });
  s.false_detection = detail::block_rate(ok, [](const ReplicationResult& r) { return r.false_detection; });
  s.adequacy_rejection = detail::block_rate(ok, [](const ReplicationResult& r) { return r.adequacy_rejected; });
  for (const auto& r : ok) ++s.k_table[r.k_hat];

  std::vector<double> ze, oe;
  std::vector<Vector> bias;
  for (const auto& r : ok) {
    if (r.zeta_error) ze.push_back(*r.zeta_error);
    if (r.omega_error) oe.push_back(*r.omega_error);
    if (r.omega_bias) bias.push_back(*r.omega_bias);
  }
  s.zeta_error = detail::mean_sd(ze);
  s.omega_error = detail::mean_sd(oe);
  s.bias_mean = Vector::Zero(cfg.n);
  s.bias_sd = Vector::Zero(cfg.n);
  if (!bias.empty()) {
    for (int c = 0; c < cfg.n; ++c) {
      std::vector<double> col;
      for (const auto& b : bias) col.push_back(b(c));
      const MeanSd m = detail::mean_sd(col);
      s.bias_mean(c) = m.mean;
      s.bias_sd(c) = m.sd;
    }
    s.mean_bias = s.bias_mean.mean();
    s.mean_sd = s.bias_sd.mean();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Outlier-induced bias of second-moment estimates

struct BiasOptions {
  Eigen::Index frequency = 0;  // Fourier index j for the periodogram terms; 0 picks T/4
  Eigen::Index window_half_width = 2;  // Daniell window for the smoothed spectrum
};

/// Monte Carlo moments of a matrix-valued difference, entrywise.
struct MomentMatrix {
  Matrix mean;
  Matrix mean_se;   // sd / sqrt(n)
  Matrix variance;  // sample variance
  Matrix variance_se;  // sqrt((m4 - s^4) / n)
};

struct BiasReport {
  int replications = 0;
  Eigen::Index t = 0;
  Eigen::Index t0 = 0;
  Eigen::Index frequency = 0;
  double lambda = 0.0;
  Vector omega;
  Matrix gamma0;  // covariance of the clean process (identity here)
  MomentMatrix cov_diff;           // T (gamma_hat_rs(0) - gamma_tilde_rs(0))
  MomentMatrix periodogram_re;     // T Re(I_rs - I_tilde_rs)
  MomentMatrix periodogram_im;     // T Im(I_rs - I_tilde_rs)
  MomentMatrix smoothed_re;        // T Re(F_hat_rs - F_tilde_rs)
  Matrix target_cov;               // omega_r omega_s
  Matrix target_periodogram;       // omega_r omega_s / 2 pi
  Matrix target_cov_variance;      // omega_s^2 g_rr + omega_r^2 g_ss + 2 omega_r omega_s g_rs
};

namespace detail {

class MomentAccumulator {
 public:
  MomentAccumulator(Eigen::Index n, std::size_t reps) : samples_(reps, Matrix::Zero(n, n)) {}
  void set(std::size_t i, Matrix m) { samples_[i] = std::move(m); }

  MomentMatrix finish() const {
    const Eigen::Index n = samples_.front().rows();
    const double r = static_cast<double>(samples_.size());
    MomentMatrix out{Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)};
    for (const auto& s : samples_) out.mean += s;
    out.mean /= r;
    Matrix m2 = Matrix::Zero(n, n), m4 = Matrix::Zero(n, n);
    for (const auto& s : samples_) {
      const Matrix d = s - out.mean;
      m2 += d.cwiseProduct(d);
      m4 += d.cwiseProduct(d).cwiseProduct(d).cwiseProduct(d);
    }
    out.variance = m2 / (r - 1.0);
    out.mean_se = (out.variance / r).cwiseSqrt();
    const Matrix pop2 = m2 / r;
    out.variance_se = ((m4 / r - pop2.cwiseProduct(pop2)) / r).cwiseMax(0.0).cwiseSqrt();
    return out;
  }

 private:
  std::vector<Matrix> samples_;
};

inline CMatrix periodogram_at(const MultiSeries& s, Eigen::Index j) {
  const CVector d = dft(s, j);
  return d * d.adjoint();
}

}  // namespace detail

/// Clean N(0, I) white noise z and y = z + omega at t0, compared through the
/// lag-0 covariance, the periodogram at lambda_j and a Daniell-smoothed
/// spectrum at lambda_j.
inline BiasReport bias_experiment(const Vector& omega, Eigen::Index t0, Eigen::Index t, int replications,
                                  std::uint64_t seed, const BiasOptions& opt = {}, unsigned workers = 0) {
  const Eigen::Index n = omega.size();
  if (n < 1 || t < 8 || t0 < 1 || t0 > t) throw ArgumentError("bias_experiment: bad dimensions");
  if (replications < 2) throw ArgumentError("bias_experiment: need at least two replications");
  BiasReport rep;
  rep.replications = replications;
  rep.t = t;
  rep.t0 = t0;
  rep.frequency = opt.frequency > 0 ? opt.frequency : t / 4;
  const Eigen::Index m = opt.window_half_width;
  if (rep.frequency - m < 1 || rep.frequency + m >= (t + 1) / 2)
    throw ArgumentError("bias_experiment: window leaves the interior frequencies");
  rep.lambda = fourier_frequency(rep.frequency, t);
  rep.omega = omega;
  rep.gamma0 = Matrix::Identity(n, n);
  const auto reps = static_cast<std::size_t>(replications);
  detail::MomentAccumulator cov(n, reps), pre(n, reps), pim(n, reps), sre(n, reps);
  const double td = static_cast<double>(t);
  parallel_for(
      reps,
      [&](std::size_t i) {
        Rng rng(stream_seed(seed, i));
        Matrix z = rng.normal_matrix(n, t);
        Matrix y = z;
        y.col(t0 - 1) += omega;
        const MultiSeries zs(std::move(z)), ys(std::move(y));
        cov.set(i, td * (lag_cov(ys, 0).gammas[0] - lag_cov(zs, 0).gammas[0]));
        const CMatrix di = td * (detail::periodogram_at(ys, rep.frequency) - detail::periodogram_at(zs, rep.frequency));
        pre.set(i, di.real());
        pim.set(i, di.imag());
        CMatrix acc = CMatrix::Zero(n, n);
        for (Eigen::Index j = rep.frequency - m; j <= rep.frequency + m; ++j)
          acc += detail::periodogram_at(ys, j) - detail::periodogram_at(zs, j);
        sre.set(i, (td * acc / static_cast<double>(2 * m + 1)).real());
      },
      workers);
  rep.cov_diff = cov.finish();
  rep.periodogram_re = pre.finish();
  rep.periodogram_im = pim.finish();
  rep.smoothed_re = sre.finish();
  rep.target_cov = omega * omega.transpose();
  rep.target_periodogram = rep.target_cov / kTwoPi;
  rep.target_cov_variance.resize(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index s = 0; s < n; ++s)
      rep.target_cov_variance(r, s) = omega(s) * omega(s) * rep.gamma0(r, r) + omega(r) * omega(r) * rep.gamma0(s, s) +
                                      2.0 * omega(r) * omega(s) * rep.gamma0(r, s);
  return rep;
}

}  // namespace odfm
