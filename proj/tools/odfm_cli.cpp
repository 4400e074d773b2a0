// odfm: adequacy testing, factor estimation, outlier detection and Monte Carlo
// runs from the command line. Every run writes manifest.json next to its
// outputs so it can be repeated exactly.
//
// Exit codes: 0 success, 1 error, 2 rejection (adequacy rejected, or detection
// aborted by the adequacy check), 3 estimator did not converge.

#include "odfm/odfm.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace odfm;

namespace {

using detail::format_double;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRejected = 2;
constexpr int kExitNotConverged = 3;

struct Options {
  std::string input;
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string format = "json";
  std::string transform_spec;
  std::string sidecar;
  std::string config;
  char delimiter = ',';
  bool no_header = false;
  bool rows_are_components = false;
  bool label_column = false;

  // pipeline overrides
  std::optional<double> k_alpha;
  std::optional<std::string> mode;
  std::optional<std::string> estimator;
  std::optional<int> max_rounds;
  std::optional<int> k;
  std::optional<int> n_bands;
  std::optional<double> alpha;
  std::optional<std::string> df_rule;
  std::optional<std::string> adjust;
  std::optional<int> jd_lags;
  bool force = false;
  bool recompute = false;
  bool all = false;

  // simulate
  std::string preset;
  std::optional<int> replications;
  bool per_replication = false;
  bool bias = false;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

CsvOptions csv_options(const Options& o) {
  CsvOptions c;
  c.delimiter = o.delimiter;
  c.header = !o.no_header;
  c.orientation = o.rows_are_components ? Orientation::RowsAreComponents : Orientation::ColumnsAreComponents;
  c.label_column = o.label_column;
  return c;
}

MultiSeries load_input(const Options& o) {
  if (o.input.empty()) throw ArgumentError("--input is required");
  if (!fs::exists(o.input)) throw ArgumentError("input file not found: " + o.input);
  MultiSeries s = load_csv(o.input, csv_options(o));
  std::vector<TransformKind> spec;
  if (!o.sidecar.empty()) {
    const Sidecar sc = load_sidecar(o.sidecar);
    if (!sc.labels.empty()) s = MultiSeries(s.values(), sc.labels, sc.time_origin);
    else if (sc.time_origin) s = MultiSeries(s.values(), s.labels(), sc.time_origin);
    spec = sc.transforms;
  }
  if (!o.transform_spec.empty()) spec = parse_transform_list(o.transform_spec, s.n());
  if (!spec.empty()) s = apply_transform(s, spec);
  return s;
}

PipelineConfig pipeline_config(const Options& o, PipelineConfig base = {}) {
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file: " + o.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON in ") + o.config + ": " + e.what());
    }
    base = pipeline_from_json(j.contains("pipeline") ? j["pipeline"] : j, base);
  }
  if (o.k_alpha) base.k_alpha = *o.k_alpha;
  if (o.mode) base.mode = parse_detection_mode(*o.mode);
  if (o.estimator) base.estimator = parse_method(*o.estimator);
  if (o.max_rounds) base.max_rounds = *o.max_rounds;
  if (o.k) base.k = *o.k;
  if (o.n_bands) base.adequacy.n_bands = *o.n_bands;
  if (o.alpha) base.adequacy.alpha = *o.alpha;
  if (o.df_rule) base.adequacy.df_rule = parse_df_rule(*o.df_rule);
  if (o.adjust) base.strategy = parse_adjust_strategy(*o.adjust);
  if (o.jd_lags) base.jd_lags = *o.jd_lags;
  if (o.force) base.force = true;
  if (o.recompute) base.recompute_directions = true;
  if (o.seed_given) base.jd.seed = o.seed;
  if (base.k && *base.k < 1) throw ConfigError("--k must be at least 1");
  if (!(base.k_alpha > 0)) throw ConfigError("--k-alpha must be positive");
  if (base.max_rounds < 1) throw ConfigError("--max-rounds must be at least 1");
  if (base.adequacy.n_bands < 1) throw ConfigError("--n-bands must be at least 1");
  if (!(base.adequacy.alpha > 0 && base.adequacy.alpha < 1)) throw ConfigError("--alpha must lie in (0, 1)");
  return base;
}

void write_manifest(const Options& o, const std::string& cmd, const json& resolved, int argc, char** argv) {
  json args = json::array();
  for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
  json m{{"tool", "odfm"},
         {"version", ODFM_VERSION},
         {"subcommand", cmd},
         {"arguments", args},
         {"seed", o.seed},
         {"input", o.input},
         {"format", o.format},
         {"transform_spec", o.transform_spec},
         {"normal_method", kNormalMethod},
         {"config", resolved},
         {"timestamp", timestamp()}};
  write_json(fs::path(o.output_dir) / "manifest.json", m);
}

// ---------------------------------------------------------------------------
// Text renderings

std::string adequacy_table(const AdequacyResult& r) {
  std::ostringstream s;
  s << "band        J        U   -m log U    df    p-value  critical  decision\n";
  for (const auto& b : r.bands) {
    std::ostringstream range;
    range << "(" << b.moments.a << "," << b.moments.b << "]";
    s << std::left << std::setw(10) << range.str() << std::right << std::setw(3) << b.moments.j << std::setw(9)
      << fmt(b.test.u) << std::setw(11) << fmt(b.test.statistic, 3) << std::setw(6) << b.test.df << std::setw(11)
      << fmt(b.test.p_value) << std::setw(10) << fmt(b.critical, 2) << "  " << (b.reject ? "reject" : "accept")
      << "\n";
  }
  s << "overall: " << (r.reject_any ? "reject" : "accept") << " at alpha = " << r.alpha
    << " (per band, no multiplicity correction)\n";
  return s.str();
}

std::string adequacy_csv(const AdequacyResult& r) {
  std::ostringstream s;
  s << "a,b,J,U,statistic,df,p_value,critical,reject\n";
  for (const auto& b : r.bands)
    s << b.moments.a << "," << b.moments.b << "," << b.moments.j << "," << format_double(b.test.u) << ","
      << format_double(b.test.statistic) << "," << b.test.df << "," << format_double(b.test.p_value) << ","
      << format_double(b.critical) << "," << (b.reject ? 1 : 0) << "\n";
  return s.str();
}

std::string model_table(const FactorModel& m, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "method " << to_string(m.method) << ", K = " << m.k << "\n";
  s << std::left << std::setw(12) << "component";
  for (int k = 0; k < m.k; ++k) s << std::right << std::setw(10) << ("A" + std::to_string(k + 1));
  s << std::setw(12) << "sigma_eta" << "\n";
  for (Eigen::Index i = 0; i < m.a.rows(); ++i) {
    s << std::left << std::setw(12) << labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < m.k; ++k) s << std::right << std::setw(10) << fmt(m.a(i, k));
    s << std::setw(12) << fmt(m.sigma_eta(i)) << "\n";
  }
  const auto& d = m.diagnostics;
  if (d.objective) s << "off-diagonal objective: " << d.objective.value() << "\n";
  if (d.log_likelihood) s << "log-likelihood: " << d.log_likelihood.value() << (d.heywood ? " (Heywood case)" : "") << "\n";
  s << "iterations: " << d.iterations << (d.converged ? "" : " (not converged)") << "\n";
  return s.str();
}

std::string model_csv(const FactorModel& m, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "component";
  for (int k = 0; k < m.k; ++k) s << ",A" << k + 1;
  s << ",sigma_eta\n";
  for (Eigen::Index i = 0; i < m.a.rows(); ++i) {
    s << labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < m.k; ++k) s << "," << format_double(m.a(i, k));
    s << "," << format_double(m.sigma_eta(i)) << "\n";
  }
  return s.str();
}

std::string report_table(const OutlierReport& r, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "K (detection) = " << r.k_detect << ", K (estimation) = " << r.k_estimate << ", k_alpha = " << fmt(r.k_alpha)
    << ", mode = " << to_string(r.mode) << ", rounds = " << r.iterations << "\n";
  if (r.aborted) s << "ABORTED: adequacy test rejects the factor model; rerun with --force to continue\n";
  if (r.detections.empty()) s << "no outliers detected\n";
  for (std::size_t i = 0; i < r.detections.size(); ++i) {
    const auto& d = r.detections[i];
    s << "date " << d.date << "  score " << fmt(d.score) << "  direction " << d.direction << "  round " << d.round
      << "\n";
    if (i < r.sizes.size()) {
      const auto& z = r.sizes[i];
      s << "  " << std::left << std::setw(12) << "component" << std::right << std::setw(11) << "omega_hat"
        << std::setw(11) << "zeta_hat" << "\n";
      for (Eigen::Index c = 0; c < z.omega_hat.size(); ++c)
        s << "  " << std::left << std::setw(12) << labels[static_cast<std::size_t>(c)] << std::right << std::setw(11)
          << fmt(z.omega_hat(c)) << std::setw(11) << fmt(z.zeta_hat(c)) << "\n";
      s << "  alpha_hat:";
      for (Eigen::Index k = 0; k < z.alpha_hat.size(); ++k) s << " " << fmt(z.alpha_hat(k));
      s << "\n";
    }
  }
  for (const auto& w : r.warnings) s << "warning: " << w << "\n";
  return s.str();
}

std::string report_csv(const OutlierReport& r) {
  std::ostringstream s;
  s << "date,score,direction,round";
  const Eigen::Index n = r.eigenvalues.size();
  for (Eigen::Index c = 0; c < n; ++c) s << ",omega_hat_" << c + 1;
  for (Eigen::Index c = 0; c < n; ++c) s << ",zeta_hat_" << c + 1;
  s << "\n";
  for (std::size_t i = 0; i < r.detections.size(); ++i) {
    const auto& d = r.detections[i];
    s << d.date << "," << format_double(d.score) << "," << d.direction << "," << d.round;
    for (Eigen::Index c = 0; c < n; ++c) s << "," << (i < r.sizes.size() ? format_double(r.sizes[i].omega_hat(c)) : "");
    for (Eigen::Index c = 0; c < n; ++c) s << "," << (i < r.sizes.size() ? format_double(r.sizes[i].zeta_hat(c)) : "");
    s << "\n";
  }
  return s.str();
}

// Projection series of the observed panel with their threshold lines.
std::string projections_csv(const OutlierReport& r) {
  const ProjectionSet& p = r.projections;
  std::ostringstream s;
  s << "t";
  for (Eigen::Index i = 0; i < p.count(); ++i)
    s << ",w" << i + 1 << ",score" << i + 1 << ",upper" << i + 1 << ",lower" << i + 1;
  s << "\n";
  for (Eigen::Index t = 0; t < p.series.cols(); ++t) {
    s << t + 1;
    for (Eigen::Index i = 0; i < p.count(); ++i) {
      const double sc = p.sd(i) > 0 ? std::abs(p.series(i, t) - p.mean(i)) / p.sd(i) : 0.0;
      s << "," << format_double(p.series(i, t)) << "," << format_double(sc) << ","
        << format_double(p.mean(i) + r.k_alpha * p.sd(i)) << "," << format_double(p.mean(i) - r.k_alpha * p.sd(i));
    }
    s << "\n";
  }
  return s.str();
}

// Cumulated eigenvalue shares of Gamma(0) with and without the floor correction.
std::string eigen_csv(const Vector& ev) {
  std::ostringstream s;
  s << "k,eigenvalue,cumulated_share,corrected_share\n";
  const Vector e = ev.cwiseMax(0.0);
  const double total = e.sum();
  const double floor = e(e.size() - 1);
  double cum = 0.0;
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    cum += e(k);
    const double corrected = (cum + static_cast<double>(e.size() - 1 - k) * floor) / total;
    s << k + 1 << "," << format_double(ev(k)) << "," << format_double(cum / total) << "," << format_double(corrected)
      << "\n";
  }
  return s.str();
}

std::string summary_table(const MonteCarloSummary& m) {
  std::ostringstream s;
  s << "design " << m.name << ": " << m.replications << " replications, " << m.failures << " failed, seed " << m.seed
    << "\n";
  s << "detection (%)          value   block se\n";
  for (std::size_t i = 0; i < m.per_date.size(); ++i)
    s << "  t = " << std::left << std::setw(16) << m.dates[i] << std::right << std::setw(7)
      << fmt(m.per_date[i].percent, 1) << std::setw(11) << fmt(m.per_date[i].block_se, 2) << "\n";
  s << "  all dates            " << std::setw(7) << fmt(m.whole.percent, 1) << std::setw(11)
    << fmt(m.whole.block_se, 2) << "\n";
  s << "  false detection      " << std::setw(7) << fmt(m.false_detection.percent, 1) << std::setw(11)
    << fmt(m.false_detection.block_se, 2) << "\n";
  s << "  adequacy rejection   " << std::setw(7) << fmt(m.adequacy_rejection.percent, 1) << std::setw(11)
    << fmt(m.adequacy_rejection.block_se, 2) << "\n";
  s << "estimated K (%):";
  for (const auto& [k, c] : m.k_table) s << "  K=" << k << ": " << fmt(100.0 * c / std::max(1, m.replications - m.failures), 1);
  s << "\n";
  s << "||zeta_hat - zeta||  mean " << fmt(m.zeta_error.mean) << "  sd " << fmt(m.zeta_error.sd) << "\n";
  s << "||omega_hat - omega|| mean " << fmt(m.omega_error.mean) << "  sd " << fmt(m.omega_error.sd) << "\n";
  s << "omega_hat bias (mean over components) " << fmt(m.mean_bias) << ", sd " << fmt(m.mean_sd) << "\n";
  return s.str();
}

std::string summary_csv(const MonteCarloSummary& m) {
  std::ostringstream s;
  s << "statistic,value,block_se\n";
  for (std::size_t i = 0; i < m.per_date.size(); ++i)
    s << "detected_t" << m.dates[i] << "," << format_double(m.per_date[i].percent) << ","
      << format_double(m.per_date[i].block_se) << "\n";
  s << "detected_all," << format_double(m.whole.percent) << "," << format_double(m.whole.block_se) << "\n";
  s << "false_detection," << format_double(m.false_detection.percent) << "," << format_double(m.false_detection.block_se)
    << "\n";
  s << "zeta_error_mean," << format_double(m.zeta_error.mean) << ",\n";
  s << "omega_error_mean," << format_double(m.omega_error.mean) << ",\n";
  s << "mean_bias," << format_double(m.mean_bias) << ",\n";
  return s.str();
}

std::string replications_csv(const MonteCarloSummary& m) {
  std::ostringstream s;
  s << "index,failed,detected,all_hit,false_detection,k_hat,adequacy_rejected,zeta_error,omega_error\n";
  for (const auto& r : m.runs) {
    std::string dates;
    for (Eigen::Index d : r.detected) dates += (dates.empty() ? "" : " ") + std::to_string(d);
    s << r.index << "," << (r.failed ? 1 : 0) << "," << dates << "," << (r.all_hit ? 1 : 0) << ","
      << (r.false_detection ? 1 : 0) << "," << r.k_hat << "," << (r.adequacy_rejected ? 1 : 0) << ","
      << (r.zeta_error ? format_double(*r.zeta_error) : "") << "," << (r.omega_error ? format_double(*r.omega_error) : "")
      << "\n";
  }
  return s.str();
}

// Writes the main artefact in the requested format and echoes tables to stdout.
void emit(const Options& o, const std::string& stem, const json& j, const std::string& table, const std::string& csv) {
  const fs::path dir(o.output_dir);
  if (o.format == "json") write_json(dir / (stem + ".json"), j);
  else if (o.format == "table") write_text(dir / (stem + ".txt"), table);
  else write_text(dir / (stem + ".csv"), csv);
  std::cout << table;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_adequacy(const Options& o, int argc, char** argv) {
  const PipelineConfig pc = pipeline_config(o);
  const MultiSeries y = load_input(o);
  const AdequacyResult r = adequacy_test(y, pc.adequacy);
  write_manifest(o, "adequacy", to_json(pc), argc, argv);
  emit(o, "adequacy", to_json(r), adequacy_table(r), adequacy_csv(r));
  return r.reject_any ? kExitRejected : kExitOk;
}

int cmd_estimate(const Options& o, int argc, char** argv) {
  const PipelineConfig pc = pipeline_config(o);
  const MultiSeries y = load_input(o);
  int k = 0;
  if (pc.k) {
    k = *pc.k;
    if (k >= y.n()) throw ConfigError("--k must be smaller than the number of series");
  } else {
    k = std::min(select_k(sym_eigen(lag_cov(y, 0).gammas[0]).values, pc.select_alpha, pc.correct_floor),
                 static_cast<int>(y.n() - 1));
  }
  write_manifest(o, "estimate", to_json(pc), argc, argv);
  std::vector<Method> methods;
  if (o.all) methods = {Method::Svd, Method::JointDiag, Method::Ml};
  else methods = {pc.estimator};
  bool converged = true;
  std::vector<FactorModel> models;
  for (Method m : methods) {
    FactorModel fm = estimate(y, k, m, pc.jd_lags, pc.jd, pc.ml);
    converged = converged && fm.diagnostics.converged;
    emit(o, "model_" + to_string(m), to_json(fm), model_table(fm, y.labels()), model_csv(fm, y.labels()));
    models.push_back(std::move(fm));
  }
  if (models.size() > 1) {
    // Common-component covariances AA' are comparable across estimators
    // even though A itself is identified only up to rotation.
    json cmp = json::array();
    std::ostringstream t;
    t << "max |AA'_i - AA'_j| between estimators\n";
    for (std::size_t i = 0; i < models.size(); ++i)
      for (std::size_t j = i + 1; j < models.size(); ++j) {
        const double d = (models[i].a * models[i].a.transpose() - models[j].a * models[j].a.transpose()).cwiseAbs().maxCoeff();
        cmp.push_back({{"a", to_string(models[i].method)}, {"b", to_string(models[j].method)}, {"max_abs_diff", d}});
        t << "  " << to_string(models[i].method) << " vs " << to_string(models[j].method) << ": " << fmt(d) << "\n";
      }
    write_json(fs::path(o.output_dir) / "comparison.json", cmp);
    write_text(fs::path(o.output_dir) / "comparison.txt", t.str());
    std::cout << t.str();
  }
  return converged ? kExitOk : kExitNotConverged;
}

int cmd_detect(const Options& o, int argc, char** argv) {
  const PipelineConfig pc = pipeline_config(o);
  const MultiSeries y = load_input(o);
  const OutlierReport r = run_pipeline(y, pc);
  write_manifest(o, "detect", to_json(pc), argc, argv);
  emit(o, "report", to_json(r), report_table(r, y.labels()), report_csv(r));
  const fs::path dir(o.output_dir);
  write_text(dir / "projections.csv", projections_csv(r));
  write_text(dir / "eigenvalues.csv", eigen_csv(r.eigenvalues));
  if (r.adjusted) save_csv((dir / "adjusted.csv").string(), *r.adjusted, csv_options(o));
  if (r.aborted) return kExitRejected;
  if (r.model && !r.model->diagnostics.converged) return kExitNotConverged;
  return kExitOk;
}

int cmd_simulate(const Options& o, int argc, char** argv) {
  if (o.bias) {
    const int reps = o.replications.value_or(2000);
    if (reps < 2) throw ConfigError("--replications must be at least 2 for the bias experiment");
    Vector omega(2);
    omega << 1.0, 2.0;
    const BiasReport b = bias_experiment(omega, 100, 200, reps, o.seed);
    write_manifest(o, "simulate", json{{"bias", true}, {"replications", reps}}, argc, argv);
    std::ostringstream t;
    t << "bias experiment, N = 2 white noise, omega = (1, 2), T = 200, t0 = 100, " << reps << " replications\n";
    for (int r = 0; r < 2; ++r)
      for (int s = r; s < 2; ++s)
        t << "  (" << r + 1 << "," << s + 1 << ")  T dgamma mean " << fmt(b.cov_diff.mean(r, s)) << " (target "
          << fmt(b.target_cov(r, s)) << ")  var " << fmt(b.cov_diff.variance(r, s)) << " (target "
          << fmt(b.target_cov_variance(r, s)) << ")  T dI re " << fmt(b.periodogram_re.mean(r, s)) << "  im "
          << fmt(b.periodogram_im.mean(r, s)) << "  T dF " << fmt(b.smoothed_re.mean(r, s)) << " (target "
          << fmt(b.target_periodogram(r, s)) << ")\n";
    emit(o, "bias", to_json(b), t.str(), t.str());
    return kExitOk;
  }
  SimConfig cfg;
  if (!o.preset.empty() && !o.config.empty()) throw ConfigError("use either --preset or --config, not both");
  if (!o.preset.empty()) cfg = preset(o.preset);
  else if (!o.config.empty()) cfg = load_sim_config(o.config);
  else throw ConfigError("simulate needs --preset or --config");
  if (o.replications) {
    if (*o.replications < 1) throw ConfigError("--replications must be at least 1");
    cfg.replications = *o.replications;
  }
  if (o.seed_given) cfg.seed = o.seed;
  Options no_file = o;
  no_file.config.clear();
  cfg.pipeline = pipeline_config(no_file, cfg.pipeline);
  cfg.validate();
  write_manifest(o, "simulate", to_json(cfg), argc, argv);
  const MonteCarloSummary m = monte_carlo(cfg);
  emit(o, "summary", to_json(m), summary_table(m), summary_csv(m));
  if (o.per_replication) write_text(fs::path(o.output_dir) / "replications.csv", replications_csv(m));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier detection in dynamic factor models"};
  app.set_version_flag("--version", std::string(ODFM_VERSION));
  app.require_subcommand(1);
  Options o;

  auto add_input = [&](CLI::App* c) {
    c->add_option("--input", o.input, "CSV file with one column per series (see --rows-are-components)");
    c->add_option("--transform-spec", o.transform_spec,
                  "comma-separated transforms per series: none, diff, log-diff, double-log-diff");
    c->add_option("--sidecar", o.sidecar, "JSON sidecar with labels, transforms and time origin");
    c->add_option("--delimiter", o.delimiter, "CSV field delimiter");
    c->add_flag("--no-header", o.no_header, "CSV has no header row");
    c->add_flag("--rows-are-components", o.rows_are_components, "each CSV row is one series");
    c->add_flag("--label-column", o.label_column, "first column holds series labels (row orientation)");
  };
  auto add_common = [&](CLI::App* c) {
    c->add_option("--output-dir", o.output_dir, "directory for outputs (created if missing)");
    c->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) { o.seed_given = true; });
    c->add_option("--format", o.format, "report format")->check(CLI::IsMember({"json", "table", "csv"}));
    c->add_option("--config", o.config, "JSON configuration file");
  };
  auto add_pipeline = [&](CLI::App* c) {
    c->add_option("--k", o.k, "number of factors (default: automatic)");
    c->add_option("--n-bands", o.n_bands, "frequency bands for the adequacy test");
    c->add_option("--alpha", o.alpha, "adequacy test level");
    c->add_option("--df-rule", o.df_rule, "chi-square degrees of freedom: n-squared or antisymmetric");
    c->add_option("--estimator", o.estimator, "svd, jointdiag or ml");
    c->add_option("--jd-lags", o.jd_lags, "lags H for the joint diagonalizer (default K)");
  };

  CLI::App* adequacy = app.add_subcommand("adequacy", "frequency-domain test that the spectrum is real");
  add_input(adequacy);
  add_common(adequacy);
  add_pipeline(adequacy);

  CLI::App* est = app.add_subcommand("estimate", "estimate loadings, factors and idiosyncratic variances");
  add_input(est);
  add_common(est);
  add_pipeline(est);
  est->add_flag("--all", o.all, "run all three estimators and compare");

  CLI::App* det = app.add_subcommand("detect", "detect outliers and estimate their sizes");
  add_input(det);
  add_common(det);
  add_pipeline(det);
  det->add_option("--k-alpha", o.k_alpha, "detection threshold in standard deviations (default sqrt(20))");
  det->add_option("--mode", o.mode, "homoscedastic or heteroscedastic");
  det->add_option("--max-rounds", o.max_rounds, "maximum detection rounds");
  det->add_option("--adjust", o.adjust, "auto, var-forecast or interpolate");
  det->add_flag("--force", o.force, "continue when the adequacy test rejects");
  det->add_flag("--recompute-directions", o.recompute, "re-derive directions from the adjusted series each round");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo runs of a simulation design");
  add_common(sim);
  add_pipeline(sim);
  sim->add_option("--preset", o.preset, "built-in design: " + [] {
    std::string s;
    for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }());
  sim->add_option("--replications", o.replications, "number of replications");
  sim->add_option("--k-alpha", o.k_alpha, "detection threshold");
  sim->add_option("--mode", o.mode, "homoscedastic or heteroscedastic");
  sim->add_option("--max-rounds", o.max_rounds, "maximum detection rounds");
  sim->add_option("--adjust", o.adjust, "auto, var-forecast or interpolate");
  sim->add_flag("--recompute-directions", o.recompute, "re-derive directions each round");
  sim->add_flag("--per-replication", o.per_replication, "also write replications.csv");
  sim->add_flag("--bias", o.bias, "run the outlier-bias experiment on N = 2 white noise instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    fs::create_directories(o.output_dir);
    if (*adequacy) return cmd_adequacy(o, argc, argv);
    if (*est) return cmd_estimate(o, argc, argv);
    if (*det) return cmd_detect(o, argc, argv);
    if (*sim) return cmd_simulate(o, argc, argv);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what();
    if (e.col() > 0) std::cerr << " (row " << e.row() << ", column " << e.col() << ")";
    std::cerr << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
