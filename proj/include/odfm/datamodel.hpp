#pragma once

// Series container, CSV/JSON ingestion and the preliminary transforms applied
// to raw economic data before any modelling.

#include "odfm/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace odfm {

/// N x T panel of observations. Row i is component i, column t-1 is time t
/// (dates are 1-based everywhere in the public API). Immutable after
/// construction.
class MultiSeries {
 public:
  MultiSeries(Matrix values, std::vector<std::string> labels = {},
              std::optional<std::string> time_origin = std::nullopt)
      : values_(std::move(values)),
        labels_(std::move(labels)),
        time_origin_(std::move(time_origin)) {
    if (values_.rows() < 1) throw ArgumentError("MultiSeries needs N >= 1 components");
    if (values_.cols() < 2) throw ArgumentError("MultiSeries needs T >= 2 observations");
    if (!values_.allFinite()) throw ArgumentError("MultiSeries values must be finite");
    if (labels_.empty()) {
      labels_.reserve(static_cast<std::size_t>(values_.rows()));
      for (Eigen::Index i = 0; i < values_.rows(); ++i) labels_.push_back("y" + std::to_string(i + 1));
    }
    if (static_cast<Eigen::Index>(labels_.size()) != values_.rows())
      throw ArgumentError("label count does not match the number of components");
  }

  const Matrix& values() const { return values_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::optional<std::string>& time_origin() const { return time_origin_; }
  Eigen::Index n() const { return values_.rows(); }
  Eigen::Index t() const { return values_.cols(); }

  /// Observation at 1-based date t.
  Vector at(Eigen::Index date) const {
    detail::require(date >= 1 && date <= t(), "date out of range");
    return values_.col(date - 1);
  }

  MultiSeries with_values(Matrix v) const { return MultiSeries(std::move(v), labels_, time_origin_); }

  bool operator==(const MultiSeries& o) const {
    return values_ == o.values_ && labels_ == o.labels_ && time_origin_ == o.time_origin_;
  }

 private:
  Matrix values_;
  std::vector<std::string> labels_;
  std::optional<std::string> time_origin_;
};

// ---------------------------------------------------------------------------
// Transforms

enum class TransformKind { None, Diff, LogDiff, DoubleLogDiff };

inline int transform_order(TransformKind k) {
  switch (k) {
    case TransformKind::None: return 0;
    case TransformKind::Diff:
    case TransformKind::LogDiff: return 1;
    case TransformKind::DoubleLogDiff: return 2;
  }
  return 0;
}

inline std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::None: return "none";
    case TransformKind::Diff: return "diff";
    case TransformKind::LogDiff: return "log-diff";
    case TransformKind::DoubleLogDiff: return "double-log-diff";
  }
  return "none";
}

inline TransformKind parse_transform(std::string_view s) {
  if (s == "none") return TransformKind::None;
  if (s == "diff" || s == "d") return TransformKind::Diff;
  if (s == "log-diff" || s == "dlog") return TransformKind::LogDiff;
  if (s == "double-log-diff" || s == "d2log") return TransformKind::DoubleLogDiff;
  throw ParseError("unknown transform kind '" + std::string(s) + "'");
}

/// Applies one transform per component. Components with lower differencing
/// order are truncated from the front so every row ends on the same date.
inline MultiSeries apply_transform(const MultiSeries& series, const std::vector<TransformKind>& spec) {
  const Eigen::Index n = series.n();
  const Eigen::Index t = series.t();
  if (static_cast<Eigen::Index>(spec.size()) != n)
    throw ArgumentError("transform spec length must equal the number of components");
  int max_order = 0;
  for (auto k : spec) max_order = std::max(max_order, transform_order(k));
  const Eigen::Index out_t = t - max_order;
  if (out_t < 2) throw ArgumentError("series too short for the requested transforms");

  const Matrix& y = series.values();
  Matrix out(n, out_t);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TransformKind kind = spec[static_cast<std::size_t>(i)];
    Vector row = y.row(i).transpose();
    if (kind == TransformKind::LogDiff || kind == TransformKind::DoubleLogDiff) {
      for (Eigen::Index s = 0; s < t; ++s) {
        if (!(row(s) > 0.0))
          throw DomainError("log transform of non-positive value in component '" + series.labels()[i] +
                            "' at t=" + std::to_string(s + 1));
        row(s) = std::log(row(s));
      }
    }
    const int order = transform_order(kind);
    for (int o = 0; o < order; ++o) {
      const Eigen::Index len = row.size() - 1;
      Vector d = row.tail(len) - row.head(len);
      row = std::move(d);
    }
    out.row(i) = row.tail(out_t).transpose();
  }
  return series.with_values(std::move(out));
}

/// Removes the row-wise sample mean. Returns the centered panel and the mean.
inline std::pair<MultiSeries, Vector> center(const MultiSeries& series) {
  Vector mean = series.values().rowwise().mean();
  Matrix c = series.values().colwise() - mean;
  return {series.with_values(std::move(c)), std::move(mean)};
}

/// Copy of the panel with the column at 1-based date t0 replaced.
inline MultiSeries replace_at(const MultiSeries& series, Eigen::Index t0, const Vector& value) {
  if (t0 < 1 || t0 > series.t()) throw ArgumentError("replace_at: date " + std::to_string(t0) + " out of range");
  if (value.size() != series.n()) throw ArgumentError("replace_at: value has wrong dimension");
  Matrix v = series.values();
  v.col(t0 - 1) = value;
  return series.with_values(std::move(v));
}

// ---------------------------------------------------------------------------
// CSV

enum class Orientation { ColumnsAreComponents, RowsAreComponents };

struct CsvOptions {
  char delimiter = ',';
  bool header = false;
  Orientation orientation = Orientation::ColumnsAreComponents;
  /// With RowsAreComponents: the first field of each row is the label.
  bool label_column = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  const auto where = " at row " + std::to_string(row) + ", column " + std::to_string(col);
  if (cell.empty()) throw ParseError("empty cell" + where, row, col);
  double v = 0.0;
  const char* first = cell.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ParseError("non-numeric cell '" + cell + "'" + where, row, col);
  if (!std::isfinite(v)) throw ParseError("non-finite cell" + where, row, col);
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parses CSV text. Row and column numbers in errors are 1-based and refer to
/// the text as written (header line included).
inline MultiSeries parse_csv(std::istream& in, const CsvOptions& opt = {}) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split(line, opt.delimiter));
  }
  if (rows.empty()) throw ParseError("empty CSV input");
  if (!rows.front().empty() && rows.front().front().rfind("\xEF\xBB\xBF", 0) == 0) rows.front().front().erase(0, 3);

  std::vector<std::string> header;
  std::size_t first_data = 0;
  if (opt.header) {
    header = rows.front();
    first_data = 1;
  }
  const std::size_t width = rows[first_data < rows.size() ? first_data : 0].size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width)
      throw ParseError("ragged CSV: row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                           " fields, expected " + std::to_string(width),
                       r + 1, 0);
  }
  const std::size_t n_data = rows.size() - first_data;
  if (n_data == 0) throw ParseError("CSV has a header but no data rows");

  const std::size_t skip = (opt.orientation == Orientation::RowsAreComponents && opt.label_column) ? 1 : 0;
  if (width <= skip) throw ParseError("CSV has no numeric columns");
  Matrix table(static_cast<Eigen::Index>(n_data), static_cast<Eigen::Index>(width - skip));
  std::vector<std::string> row_labels;
  for (std::size_t r = 0; r < n_data; ++r) {
    const auto& fields = rows[first_data + r];
    if (skip) row_labels.push_back(fields[0]);
    for (std::size_t c = skip; c < width; ++c)
      table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - skip)) =
          detail::parse_cell(fields[c], first_data + r + 1, c + 1);
  }

  if (opt.orientation == Orientation::ColumnsAreComponents) {
    std::vector<std::string> labels;
    if (opt.header) labels = header;
    return MultiSeries(table.transpose(), std::move(labels));
  }
  return MultiSeries(std::move(table), std::move(row_labels));
}

inline MultiSeries load_csv(const std::string& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_csv(in, opt);
}

/// Writes the panel so that parse_csv with the same options reproduces it
/// bit-for-bit (shortest round-trip number formatting).
inline void write_csv(std::ostream& out, const MultiSeries& s, const CsvOptions& opt = {}) {
  const Matrix& v = s.values();
  const char d = opt.delimiter;
  if (opt.orientation == Orientation::ColumnsAreComponents) {
    if (opt.header) {
      for (Eigen::Index i = 0; i < s.n(); ++i) out << (i ? std::string(1, d) : "") << s.labels()[i];
      out << '\n';
    }
    for (Eigen::Index t = 0; t < s.t(); ++t) {
      for (Eigen::Index i = 0; i < s.n(); ++i) out << (i ? std::string(1, d) : "") << detail::format_double(v(i, t));
      out << '\n';
    }
    return;
  }
  if (opt.header) {
    if (opt.label_column) out << "label" << d;
    for (Eigen::Index t = 0; t < s.t(); ++t) out << (t ? std::string(1, d) : "") << "t" << (t + 1);
    out << '\n';
  }
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    if (opt.label_column) out << s.labels()[i] << d;
    for (Eigen::Index t = 0; t < s.t(); ++t) out << (t ? std::string(1, d) : "") << detail::format_double(v(i, t));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const MultiSeries& s, const CsvOptions& opt = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(out, s, opt);
}

// ---------------------------------------------------------------------------
// JSON sidecar: labels, per-component transforms, time origin.

struct Sidecar {
  std::vector<std::string> labels;
  std::vector<TransformKind> transforms;
  std::optional<std::string> time_origin;
};

inline nlohmann::json to_json(const Sidecar& s) {
  nlohmann::json j;
  j["labels"] = s.labels;
  std::vector<std::string> tr;
  for (auto k : s.transforms) tr.push_back(to_string(k));
  j["transforms"] = tr;
  j["time_origin"] = s.time_origin ? nlohmann::json(*s.time_origin) : nlohmann::json(nullptr);
  return j;
}

inline Sidecar sidecar_from_json(const nlohmann::json& j) {
  Sidecar s;
  try {
    if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("transforms"))
      for (const auto& t : j.at("transforms")) s.transforms.push_back(parse_transform(t.get<std::string>()));
    if (j.contains("time_origin") && !j.at("time_origin").is_null()) s.time_origin = j.at("time_origin").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad sidecar: ") + e.what());
  }
  return s;
}

inline Sidecar load_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return sidecar_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad sidecar JSON: ") + e.what());
  }
}

/// Parses a comma-separated transform list such as "d2log,dlog,diff". A
/// single entry is broadcast to all n components.
inline std::vector<TransformKind> parse_transform_list(const std::string& text, Eigen::Index n) {
  std::vector<TransformKind> out;
  for (const auto& f : detail::split(text, ',')) out.push_back(parse_transform(f));
  if (out.size() == 1 && n > 1) out.assign(static_cast<std::size_t>(n), out.front());
  return out;
}

}  // namespace odfm
