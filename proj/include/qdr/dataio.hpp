#pragma once

// Observed-data records for one-stage and two-stage designs, CSV ingestion
// and emission, and the artificial-censoring transform.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qdr/errors.hpp"

namespace qdr {

struct StaticRecord {
  std::vector<double> x;  // x[0] is the identifiability covariate
  int a = 0;
  double y = 0.0;
  int delta = 0;
  std::optional<double> pscore;
};

struct ValidationOptions {
  // Outcome scales that are already transformed (log times, the location-shift
  // model of the covariate-dependent-censoring simulation) may be nonpositive.
  bool allow_nonpositive_times = false;
};

namespace detail {

inline bool is_binary(int v) { return v == 0 || v == 1; }

inline std::optional<std::string> check_time(double y, const ValidationOptions& opts) {
  if (!std::isfinite(y)) return "y must be finite";
  if (!opts.allow_nonpositive_times && !(y > 0.0)) return "y must be positive";
  return std::nullopt;
}

inline std::optional<std::string> check_static_record(const StaticRecord& r, std::size_t p,
                                                      const ValidationOptions& opts) {
  if (r.x.size() != p)
    return "expected " + std::to_string(p) + " covariates, got " + std::to_string(r.x.size());
  for (double v : r.x)
    if (!std::isfinite(v)) return std::string("covariates must be finite");
  if (!is_binary(r.a)) return std::string("a must be 0 or 1");
  if (!is_binary(r.delta)) return std::string("delta must be 0 or 1");
  if (auto e = check_time(r.y, opts)) return e;
  if (r.pscore && !(*r.pscore > 0.0 && *r.pscore < 1.0))
    return std::string("pscore must lie strictly in (0,1)");
  return std::nullopt;
}

}  // namespace detail

class StaticDataset {
 public:
  StaticDataset(std::vector<StaticRecord> records, std::optional<double> default_pscore = {},
                ValidationOptions opts = {})
      : records_(std::move(records)), default_pscore_(default_pscore), options_(opts) {
    validate("record");
  }

  const std::vector<StaticRecord>& records() const { return records_; }
  const StaticRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  std::size_t dim() const { return records_.front().x.size(); }
  std::optional<double> default_pscore() const { return default_pscore_; }
  const ValidationOptions& options() const { return options_; }

  double propensity(std::size_t i) const {
    const auto& r = records_[i];
    return r.pscore ? *r.pscore : *default_pscore_;
  }

  double censoring_rate() const {
    std::size_t censored = 0;
    for (const auto& r : records_) censored += r.delta == 0;
    return static_cast<double>(censored) / static_cast<double>(records_.size());
  }

  // Re-validates with a different row label; used by the CSV reader so errors
  // name "row k".
  static StaticDataset with_row_labels(std::vector<StaticRecord> records,
                                       std::optional<double> default_pscore,
                                       ValidationOptions opts, std::string_view label) {
    StaticDataset ds(std::move(records), default_pscore, opts, label);
    return ds;
  }

 private:
  StaticDataset(std::vector<StaticRecord> records, std::optional<double> default_pscore,
                ValidationOptions opts, std::string_view label)
      : records_(std::move(records)), default_pscore_(default_pscore), options_(opts) {
    validate(label);
  }

  void validate(std::string_view label) const {
    if (records_.empty()) throw data_error("dataset is empty");
    if (default_pscore_ && !(*default_pscore_ > 0.0 && *default_pscore_ < 1.0))
      throw data_error("default_pscore must lie strictly in (0,1)");
    const std::size_t p = records_.front().x.size();
    if (p == 0) throw data_error("at least one covariate is required");
    bool any_event = false;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      const std::string where = std::string(label) + " " + std::to_string(i + 1) + ": ";
      if (auto e = detail::check_static_record(r, p, options_)) throw data_error(where + *e);
      if (!r.pscore && !default_pscore_)
        throw data_error(where + "no propensity (no pscore value and no default_pscore)");
      any_event = any_event || r.delta == 1;
    }
    if (!any_event) throw data_error("no uncensored events");
  }

  std::vector<StaticRecord> records_;
  std::optional<double> default_pscore_;
  ValidationOptions options_;
};

struct DynamicRecord {
  std::vector<double> x1;
  int d1 = 0;
  int z = 0;               // eligible for stage 2: survived past s and uncensored at s
  std::vector<double> x2;  // empty when z == 0
  int d2 = 0;              // ignored when z == 0
  double y = 0.0;
  int delta = 0;
};

class DynamicDataset {
 public:
  DynamicDataset(std::vector<DynamicRecord> records, double s, double pi1, double pi2,
                 ValidationOptions opts = {}, std::string_view label = "record")
      : records_(std::move(records)), s_(s), pi1_(pi1), pi2_(pi2), options_(opts) {
    validate(label);
  }

  const std::vector<DynamicRecord>& records() const { return records_; }
  const DynamicRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  double s() const { return s_; }
  double pi1() const { return pi1_; }
  double pi2() const { return pi2_; }
  const ValidationOptions& options() const { return options_; }
  std::size_t dim1() const { return records_.front().x1.size(); }
  std::size_t dim2() const { return dim2_; }
  // Dimension of the stage-2 history (x1, d1, x2).
  std::size_t history_dim() const { return dim1() + 1 + dim2_; }

  double censoring_rate() const {
    std::size_t censored = 0;
    for (const auto& r : records_) censored += r.delta == 0;
    return static_cast<double>(censored) / static_cast<double>(records_.size());
  }

 private:
  void validate(std::string_view label) {
    if (records_.empty()) throw data_error("dataset is empty");
    if (!(s_ > 0.0) || !std::isfinite(s_)) throw data_error("stage-split time s must be positive");
    if (!(pi1_ > 0.0 && pi1_ < 1.0)) throw data_error("pi1 must lie strictly in (0,1)");
    if (!(pi2_ > 0.0 && pi2_ < 1.0)) throw data_error("pi2 must lie strictly in (0,1)");
    const std::size_t p1 = records_.front().x1.size();
    if (p1 == 0) throw data_error("at least one stage-1 covariate is required");
    std::optional<std::size_t> q;
    bool any_event = false;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      auto& r = records_[i];
      const std::string where = std::string(label) + " " + std::to_string(i + 1) + ": ";
      if (r.x1.size() != p1) throw data_error(where + "inconsistent stage-1 covariate count");
      for (double v : r.x1)
        if (!std::isfinite(v)) throw data_error(where + "covariates must be finite");
      if (!detail::is_binary(r.d1)) throw data_error(where + "d1 must be 0 or 1");
      if (!detail::is_binary(r.z)) throw data_error(where + "z must be 0 or 1");
      if (!detail::is_binary(r.delta)) throw data_error(where + "delta must be 0 or 1");
      if (auto e = detail::check_time(r.y, options_)) throw data_error(where + *e);
      if (r.z == 1) {
        if (r.x2.empty()) throw data_error(where + "stage-2 covariates missing with z=1");
        if (!q) q = r.x2.size();
        if (r.x2.size() != *q) throw data_error(where + "inconsistent stage-2 covariate count");
        for (double v : r.x2)
          if (!std::isfinite(v)) throw data_error(where + "covariates must be finite");
        if (!detail::is_binary(r.d2)) throw data_error(where + "d2 must be 0 or 1");
        if (!(r.y > s_)) throw data_error(where + "y <= s with z=1");
      } else {
        if (r.y > s_) throw data_error(where + "y > s with z=0 (stage-2 data missing)");
        r.x2.clear();
        r.d2 = 0;
      }
      any_event = any_event || r.delta == 1;
    }
    if (!any_event) throw data_error("no uncensored events");
    dim2_ = q.value_or(0);
  }

  std::vector<DynamicRecord> records_;
  double s_;
  double pi1_;
  double pi2_;
  ValidationOptions options_;
  std::size_t dim2_ = 0;
};

// y -> min(y, M); delta -> delta + (1 - delta) * I(y >= M).
inline StaticDataset apply_artificial_censoring(const StaticDataset& ds, double cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff))
    throw parameter_error("artificial censoring cutoff M must be positive");
  std::vector<StaticRecord> out = ds.records();
  for (auto& r : out) {
    if (r.y >= cutoff) {
      r.y = cutoff;
      r.delta = 1;
    }
  }
  return StaticDataset(std::move(out), ds.default_pscore(), ds.options());
}

inline DynamicDataset apply_artificial_censoring(const DynamicDataset& ds, double cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff))
    throw parameter_error("artificial censoring cutoff M must be positive");
  if (!(cutoff > ds.s()))
    throw parameter_error("artificial censoring cutoff M must exceed the stage-split time s");
  std::vector<DynamicRecord> out = ds.records();
  for (auto& r : out) {
    if (r.y >= cutoff) {
      r.y = cutoff;
      r.delta = 1;
    }
  }
  return DynamicDataset(std::move(out), ds.s(), ds.pi1(), ds.pi2(), ds.options());
}

// ---------------------------------------------------------------------------
// CSV

struct StaticSchema {
  // Empty: every header column named x<k> (k = 1, 2, ...), ordered by k.
  std::vector<std::string> x;
  std::string a = "a";
  std::string y = "y";
  std::string delta = "delta";
  // Unset: use a column named "pscore" when the header has one.
  std::optional<std::string> pscore;
};

struct DynamicSchema {
  std::vector<std::string> x1;  // empty: columns x1_<k>
  std::string d1 = "d1";
  std::string z = "z";
  std::vector<std::string> x2;  // empty: columns x2_<k>
  std::string d2 = "d2";
  std::string y = "y";
  std::string delta = "delta";
};

struct StaticReadOptions {
  std::optional<double> default_pscore;
  ValidationOptions validation;
};

namespace csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::string> lines;  // raw data lines
};

inline Table load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (!have_header) {
      std::string_view first = line;
      if (first.size() >= 3 && first.substr(0, 3) == "\xEF\xBB\xBF") first.remove_prefix(3);
      for (auto c : split(first)) t.header.emplace_back(c);
      have_header = true;
    } else {
      t.lines.push_back(line);
    }
  }
  if (!have_header) throw data_error("'" + path + "' has no header row");
  return t;
}

inline std::size_t column(const Table& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw data_error("missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

// Columns named <prefix><k>, k = 1..K contiguous, ordered by k.
inline std::vector<std::string> numbered_columns(const Table& t, const std::string& prefix) {
  std::map<int, std::string> found;
  for (const auto& h : t.header) {
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string_view rest = std::string_view(h).substr(prefix.size());
    int k = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (ec == std::errc{} && ptr == rest.data() + rest.size() && k >= 1) found[k] = h;
  }
  std::vector<std::string> names;
  int expect = 1;
  for (auto& [k, name] : found) {
    if (k != expect) throw data_error("column '" + prefix + std::to_string(expect) + "' missing");
    names.push_back(name);
    ++expect;
  }
  if (names.empty()) throw data_error("no covariate columns named " + prefix + "1, " + prefix + "2, ...");
  return names;
}

inline double number(std::string_view cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc{} || ptr != last)
    throw data_error("row " + std::to_string(row) + ", column '" + col + "': non-numeric value '" +
                     std::string(cell) + "'");
  return v;
}

inline int binary(std::string_view cell, std::size_t row, const std::string& col) {
  const double v = number(cell, row, col);
  if (v != 0.0 && v != 1.0)
    throw data_error("row " + std::to_string(row) + ": " + col + " must be 0 or 1");
  return static_cast<int>(v);
}

inline std::string format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace csv

inline StaticDataset read_static_csv(const std::string& path, const StaticSchema& schema = {},
                                     const StaticReadOptions& options = {}) {
  const auto table = csv::load(path);
  const auto xnames = schema.x.empty() ? csv::numbered_columns(table, "x") : schema.x;
  std::vector<std::size_t> xcols;
  for (const auto& n : xnames) xcols.push_back(csv::column(table, n));
  const auto acol = csv::column(table, schema.a);
  const auto ycol = csv::column(table, schema.y);
  const auto dcol = csv::column(table, schema.delta);
  std::optional<std::size_t> pcol;
  if (schema.pscore) {
    pcol = csv::column(table, *schema.pscore);
  } else if (std::find(table.header.begin(), table.header.end(), "pscore") != table.header.end()) {
    pcol = csv::column(table, "pscore");
  }
  const std::string pname = schema.pscore.value_or("pscore");

  std::vector<StaticRecord> records;
  records.reserve(table.lines.size());
  for (std::size_t i = 0; i < table.lines.size(); ++i) {
    const std::size_t row = i + 1;
    const auto cells = csv::split(table.lines[i]);
    if (cells.size() != table.header.size())
      throw data_error("row " + std::to_string(row) + ": expected " +
                       std::to_string(table.header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    StaticRecord r;
    for (std::size_t k = 0; k < xcols.size(); ++k)
      r.x.push_back(csv::number(cells[xcols[k]], row, xnames[k]));
    r.a = csv::binary(cells[acol], row, schema.a);
    r.y = csv::number(cells[ycol], row, schema.y);
    r.delta = csv::binary(cells[dcol], row, schema.delta);
    if (pcol && !cells[*pcol].empty()) r.pscore = csv::number(cells[*pcol], row, pname);
    records.push_back(std::move(r));
  }
  return StaticDataset::with_row_labels(std::move(records), options.default_pscore,
                                        options.validation, "row");
}

inline void write_static_csv(const std::string& path, const StaticDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path + "'");
  const bool any_pscore = std::any_of(ds.records().begin(), ds.records().end(),
                                      [](const StaticRecord& r) { return r.pscore.has_value(); });
  for (std::size_t k = 0; k < ds.dim(); ++k) out << 'x' << k + 1 << ',';
  out << "a,y,delta" << (any_pscore ? ",pscore" : "") << '\n';
  for (const auto& r : ds.records()) {
    for (double v : r.x) out << csv::format(v) << ',';
    out << r.a << ',' << csv::format(r.y) << ',' << r.delta;
    if (any_pscore) out << ',' << (r.pscore ? csv::format(*r.pscore) : std::string());
    out << '\n';
  }
}

inline DynamicDataset read_dynamic_csv(const std::string& path, double s, double pi1, double pi2,
                                       const DynamicSchema& schema = {},
                                       ValidationOptions validation = {}) {
  const auto table = csv::load(path);
  const auto x1names = schema.x1.empty() ? csv::numbered_columns(table, "x1_") : schema.x1;
  const auto x2names = schema.x2.empty() ? csv::numbered_columns(table, "x2_") : schema.x2;
  std::vector<std::size_t> x1cols, x2cols;
  for (const auto& n : x1names) x1cols.push_back(csv::column(table, n));
  for (const auto& n : x2names) x2cols.push_back(csv::column(table, n));
  const auto d1col = csv::column(table, schema.d1);
  const auto zcol = csv::column(table, schema.z);
  const auto d2col = csv::column(table, schema.d2);
  const auto ycol = csv::column(table, schema.y);
  const auto dcol = csv::column(table, schema.delta);

  std::vector<DynamicRecord> records;
  records.reserve(table.lines.size());
  for (std::size_t i = 0; i < table.lines.size(); ++i) {
    const std::size_t row = i + 1;
    const auto cells = csv::split(table.lines[i]);
    if (cells.size() != table.header.size())
      throw data_error("row " + std::to_string(row) + ": expected " +
                       std::to_string(table.header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    DynamicRecord r;
    for (std::size_t k = 0; k < x1cols.size(); ++k)
      r.x1.push_back(csv::number(cells[x1cols[k]], row, x1names[k]));
    r.d1 = csv::binary(cells[d1col], row, schema.d1);
    r.z = csv::binary(cells[zcol], row, schema.z);
    r.y = csv::number(cells[ycol], row, schema.y);
    r.delta = csv::binary(cells[dcol], row, schema.delta);
    if (r.z == 1) {
      for (std::size_t k = 0; k < x2cols.size(); ++k) {
        if (cells[x2cols[k]].empty())
          throw data_error("row " + std::to_string(row) + ": empty " + x2names[k] + " with z=1");
        r.x2.push_back(csv::number(cells[x2cols[k]], row, x2names[k]));
      }
      if (cells[d2col].empty())
        throw data_error("row " + std::to_string(row) + ": empty " + schema.d2 + " with z=1");
      r.d2 = csv::binary(cells[d2col], row, schema.d2);
    }
    records.push_back(std::move(r));
  }
  return DynamicDataset(std::move(records), s, pi1, pi2, validation, "row");
}

// Stage-2 columns are written blank for z = 0 rows. The column count q is
// taken from the dataset (at least one z = 1 row fixes it).
inline void write_dynamic_csv(const std::string& path, const DynamicDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path + "'");
  const std::size_t q = ds.dim2();
  for (std::size_t k = 0; k < ds.dim1(); ++k) out << "x1_" << k + 1 << ',';
  out << "d1,z,";
  for (std::size_t k = 0; k < q; ++k) out << "x2_" << k + 1 << ',';
  out << "d2,y,delta\n";
  for (const auto& r : ds.records()) {
    for (double v : r.x1) out << csv::format(v) << ',';
    out << r.d1 << ',' << r.z << ',';
    for (std::size_t k = 0; k < q; ++k) out << (r.z ? csv::format(r.x2[k]) : std::string()) << ',';
    out << (r.z ? std::to_string(r.d2) : std::string()) << ',' << csv::format(r.y) << ','
        << r.delta << '\n';
  }
}

}  // namespace qdr
