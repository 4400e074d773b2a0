#pragma once

// JSON conversions for configurations and results. Matrices are nested
// arrays (row-major), complex numbers [re, im] pairs, dates 1-based.

#include "odfm/adequacy.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/factors.hpp"
#include "odfm/moments.hpp"
#include "odfm/outliers.hpp"
#include "odfm/simulation.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace odfm {

using nlohmann::json;

inline json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json cmatrix_json(const CMatrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    out.push_back(std::move(row));
  }
  return out;
}

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(what + " must be a nested array");
  const std::size_t rows = j.size(), cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(what + " is ragged");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(what + " must contain numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Moments

inline json to_json(const LagCovSet& c) {
  json g = json::array();
  for (const auto& m : c.gammas) g.push_back(matrix_json(m));
  return {{"t", c.t}, {"mean", vector_json(c.mean)}, {"gammas", g}};
}

inline json to_json(const SpectralWindow& w) {
  return {{"kind", w.kind}, {"weights", w.weights}, {"c0", w.c0}, {"truncation", w.truncation}};
}

inline json to_json(const SpectralSet& s) {
  json out{{"t", s.t}, {"indices", s.indices}, {"freqs", s.freqs}, {"dft", cmatrix_json(s.dft)}};
  json p = json::array();
  for (const auto& m : s.periodograms) p.push_back(cmatrix_json(m));
  out["periodograms"] = std::move(p);
  if (s.smoothed) {
    json f = json::array();
    for (const auto& m : *s.smoothed) f.push_back(cmatrix_json(m));
    out["smoothed"] = std::move(f);
  }
  if (s.window) out["window"] = to_json(*s.window);
  return out;
}

// ---------------------------------------------------------------------------
// Adequacy

inline json to_json(const AdequacyResult& r) {
  json bands = json::array();
  for (const auto& b : r.bands) {
    bands.push_back({{"a", b.moments.a},
                     {"b", b.moments.b},
                     {"J", b.moments.j},
                     {"U", b.test.u},
                     {"m", b.test.m},
                     {"statistic", b.test.statistic},
                     {"df", b.test.df},
                     {"p_value", b.test.p_value},
                     {"critical", b.critical},
                     {"reject", b.reject}});
  }
  return {{"alpha", r.alpha}, {"df_rule", to_string(r.df_rule)}, {"reject_any", r.reject_any}, {"bands", bands}};
}

// ---------------------------------------------------------------------------
// Factor models

inline json to_json(const FactorModel& m) {
  json d;
  const auto& g = m.diagnostics;
  d["iterations"] = g.iterations;
  d["converged"] = g.converged;
  if (g.objective) d["objective"] = *g.objective;
  if (!g.d_h.empty()) {
    json dh = json::array();
    for (const auto& v : g.d_h) dh.push_back(vector_json(v));
    d["d_h"] = dh;
    d["restarts"] = g.restarts;
    d["best_restart"] = g.best_restart;
  }
  if (g.log_likelihood) {
    d["log_likelihood"] = *g.log_likelihood;
    d["heywood"] = g.heywood;
  }
  if (g.discarded_energy) d["discarded_energy"] = *g.discarded_energy;
  return {{"method", to_string(m.method)},
          {"K", m.k},
          {"A", matrix_json(m.a)},
          {"sigma_eta", vector_json(m.sigma_eta)},
          {"X", matrix_json(m.x)},
          {"diagnostics", d}};
}

// ---------------------------------------------------------------------------
// Pipeline

inline json to_json(const PipelineConfig& c) {
  json j{{"k_alpha", c.k_alpha},
         {"mode", to_string(c.mode)},
         {"max_rounds", c.max_rounds},
         {"recompute_directions", c.recompute_directions},
         {"adjust", to_string(c.strategy)},
         {"var_order", c.var_order},
         {"n_bands", c.adequacy.n_bands},
         {"adequacy_alpha", c.adequacy.alpha},
         {"df_rule", to_string(c.adequacy.df_rule)},
         {"force", c.force},
         {"select_alpha", c.select_alpha},
         {"correct_floor", c.correct_floor},
         {"estimator", to_string(c.estimator)},
         {"jd_lags", c.jd_lags},
         {"jd_restarts", c.jd.restarts},
         {"jd_seed", c.jd.seed},
         {"ml_tol", c.ml.tol},
         {"ml_max_iter", c.ml.max_iter}};
  j["k"] = c.k ? json(*c.k) : json(nullptr);
  j["n_directions"] = c.n_directions ? json(*c.n_directions) : json(nullptr);
  j["ar_order"] = c.ar_order ? json(*c.ar_order) : json(nullptr);
  return j;
}

/// Overlays the keys present in `j` on `base`; unknown keys are rejected.
inline PipelineConfig pipeline_from_json(const json& j, PipelineConfig c = {}) {
  if (!j.is_object()) throw ConfigError("pipeline config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "k_alpha") c.k_alpha = v.get<double>();
      else if (key == "mode") c.mode = parse_detection_mode(v.get<std::string>());
      else if (key == "max_rounds") c.max_rounds = v.get<int>();
      else if (key == "recompute_directions") c.recompute_directions = v.get<bool>();
      else if (key == "adjust") c.strategy = parse_adjust_strategy(v.get<std::string>());
      else if (key == "var_order") c.var_order = v.get<int>();
      else if (key == "n_bands") c.adequacy.n_bands = v.get<int>();
      else if (key == "adequacy_alpha") c.adequacy.alpha = v.get<double>();
      else if (key == "df_rule") c.adequacy.df_rule = parse_df_rule(v.get<std::string>());
      else if (key == "force") c.force = v.get<bool>();
      else if (key == "select_alpha") c.select_alpha = v.get<double>();
      else if (key == "correct_floor") c.correct_floor = v.get<bool>();
      else if (key == "estimator") c.estimator = parse_method(v.get<std::string>());
      else if (key == "jd_lags") c.jd_lags = v.get<int>();
      else if (key == "jd_restarts") c.jd.restarts = v.get<int>();
      else if (key == "jd_seed") c.jd.seed = v.get<std::uint64_t>();
      else if (key == "ml_tol") c.ml.tol = v.get<double>();
      else if (key == "ml_max_iter") c.ml.max_iter = v.get<int>();
      else if (key == "k") c.k = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (key == "n_directions") c.n_directions = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (key == "ar_order") c.ar_order = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else throw ConfigError("unknown pipeline key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  if (!(c.k_alpha > 0)) throw ConfigError("k_alpha must be positive");
  if (c.max_rounds < 1) throw ConfigError("max_rounds must be at least 1");
  if (c.var_order < 1) throw ConfigError("var_order must be at least 1");
  return c;
}

inline json to_json(const Detection& d) {
  return {{"date", d.date}, {"direction", d.direction}, {"score", d.score}, {"round", d.round}};
}

inline json to_json(const OutlierReport& r) {
  json dets = json::array();
  for (const auto& d : r.detections) dets.push_back(to_json(d));
  json sizes = json::array();
  for (const auto& s : r.sizes)
    sizes.push_back({{"date", s.date},
                     {"omega_hat", vector_json(s.omega_hat)},
                     {"zeta_hat", vector_json(s.zeta_hat)},
                     {"alpha_hat", vector_json(s.alpha_hat)},
                     {"ar_orders", s.ar_orders}});
  json out{{"detections", dets},
           {"sizes", sizes},
           {"k_alpha", r.k_alpha},
           {"mode", to_string(r.mode)},
           {"iterations", r.iterations},
           {"k_detect", r.k_detect},
           {"k_estimate", r.k_estimate},
           {"eigenvalues", vector_json(r.eigenvalues)},
           {"directions", matrix_json(r.projections.directions)},
           {"adequacy_rejected", r.adequacy_rejected},
           {"aborted", r.aborted},
           {"warnings", r.warnings}};
  if (const DateSize* p = r.primary()) {
    out["omega_hat"] = vector_json(p->omega_hat);
    out["zeta_hat"] = vector_json(p->zeta_hat);
    out["alpha_hat"] = vector_json(p->alpha_hat);
  }
  if (r.adequacy) out["adequacy"] = to_json(*r.adequacy);
  if (r.model) {
    json m = to_json(*r.model);
    m.erase("X");
    out["model"] = m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

inline json to_json(const SimConfig& c) {
  return {{"name", c.name},
          {"n", c.n},
          {"k", c.k},
          {"t", c.t},
          {"burn", c.burn},
          {"phi", vector_json(c.phi)},
          {"theta", vector_json(c.theta)},
          {"a", matrix_json(c.a)},
          {"sigma_eta", c.sigma_eta},
          {"omega", vector_json(c.omega)},
          {"dates", c.dates},
          {"replications", c.replications},
          {"seed", c.seed},
          {"innovation", to_string(c.innovation)},
          {"rescale_factors", c.rescale_factors},
          {"pipeline", to_json(c.pipeline)}};
}

inline SimConfig sim_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  SimConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "name") c.name = v.get<std::string>();
      else if (key == "n") c.n = v.get<int>();
      else if (key == "k") c.k = v.get<int>();
      else if (key == "t") c.t = v.get<int>();
      else if (key == "burn") c.burn = v.get<int>();
      else if (key == "phi") c.phi = vector_from_json(v, "phi");
      else if (key == "theta") c.theta = vector_from_json(v, "theta");
      else if (key == "a") c.a = matrix_from_json(v, "a");
      else if (key == "sigma_eta") c.sigma_eta = v.get<double>();
      else if (key == "omega") c.omega = vector_from_json(v, "omega");
      else if (key == "dates") c.dates = v.get<std::vector<Eigen::Index>>();
      else if (key == "replications") c.replications = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "innovation") c.innovation = parse_innovation_rule(v.get<std::string>());
      else if (key == "rescale_factors") c.rescale_factors = v.get<bool>();
      else if (key == "pipeline") c.pipeline = pipeline_from_json(v);
      else if (key == "description") continue;
      else throw ConfigError("unknown simulation key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

inline SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return sim_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
}

inline json rate_json(const RateSummary& r) { return {{"percent", r.percent}, {"block_se", r.block_se}}; }

inline json mean_sd_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}, {"count", m.count}}; }

inline json to_json(const MonteCarloSummary& s) {
  json per = json::array();
  for (std::size_t i = 0; i < s.per_date.size(); ++i)
    per.push_back({{"date", s.dates[i]}, {"percent", s.per_date[i].percent}, {"block_se", s.per_date[i].block_se}});
  json k = json::object();
  for (const auto& [kk, count] : s.k_table) k[std::to_string(kk)] = 100.0 * count / std::max(1, s.replications - s.failures);
  return {{"name", s.name},
          {"replications", s.replications},
          {"failures", s.failures},
          {"seed", s.seed},
          {"normal_method", s.normal_method},
          {"groups", s.groups},
          {"per_date", per},
          {"whole", rate_json(s.whole)},
          {"false_detection", rate_json(s.false_detection)},
          {"adequacy_rejection", rate_json(s.adequacy_rejection)},
          {"k_percent", k},
          {"zeta_error", mean_sd_json(s.zeta_error)},
          {"omega_error", mean_sd_json(s.omega_error)},
          {"bias_mean", vector_json(s.bias_mean)},
          {"bias_sd", vector_json(s.bias_sd)},
          {"mean_bias", s.mean_bias},
          {"mean_sd", s.mean_sd}};
}

inline json moment_json(const MomentMatrix& m) {
  return {{"mean", matrix_json(m.mean)},
          {"mean_se", matrix_json(m.mean_se)},
          {"variance", matrix_json(m.variance)},
          {"variance_se", matrix_json(m.variance_se)}};
}

inline json to_json(const BiasReport& b) {
  return {{"replications", b.replications},
          {"t", b.t},
          {"t0", b.t0},
          {"frequency", b.frequency},
          {"lambda", b.lambda},
          {"omega", vector_json(b.omega)},
          {"cov_diff", moment_json(b.cov_diff)},
          {"periodogram_re", moment_json(b.periodogram_re)},
          {"periodogram_im", moment_json(b.periodogram_im)},
          {"smoothed_re", moment_json(b.smoothed_re)},
          {"target_cov", matrix_json(b.target_cov)},
          {"target_periodogram", matrix_json(b.target_periodogram)},
          {"target_cov_variance", matrix_json(b.target_cov_variance)}};
}

}  // namespace odfm
