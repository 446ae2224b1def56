#pragma once

// Config-file reading for the qdr CLI. A Section wraps one JSON object,
// records every problem it meets (wrong type, out of range, unknown key)
// instead of stopping at the first, and hands back defaults so parsing can
// continue.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdr/qdr.hpp"

namespace qdr::cli {

using nlohmann::json;

class Section {
 public:
  Section(const json* j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(&problems) {
    if (j_ && !j_->is_object()) {
      problem(path_.empty() ? "config must be an object" : "must be an object");
      j_ = nullptr;
    }
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key) && !(*j_)[key].is_null(); }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    try {
      return (*j_)[key].get<T>();
    } catch (const json::exception&) {
      problem(key, "has the wrong type (" + std::string((*j_)[key].type_name()) + ")");
      return std::nullopt;
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    auto v = opt<T>(key);
    return v ? *v : fallback;
  }

  template <class T>
  T req(const std::string& key, T fallback = T{}) {
    if (!has(key)) {
      seen_.insert(key);
      problem(key, "is required");
      return fallback;
    }
    return get<T>(key, fallback);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? &(*j_)[key] : nullptr, join(key), *problems_);
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &(*j_)[key] : nullptr;
  }

  void problem(const std::string& key, const std::string& what) { problems_->push_back(join(key) + " " + what); }
  void problem(const std::string& what) { problems_->push_back((path_.empty() ? "" : path_ + ": ") + what); }

  void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) problem(key, what);
  }

  // Flags keys that no accessor asked for.
  void reject_unknown() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!seen_.contains(k)) problems_->push_back(join(k) + " is not a recognized setting");
  }

  const std::string& path() const { return path_; }
  std::vector<std::string>& problems() { return *problems_; }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
  std::vector<std::string>* problems_;
  std::set<std::string> seen_;
};

inline bool in_open_unit(double v) { return v > 0.0 && v < 1.0; }

// ---------------------------------------------------------------------------
// Shared pieces

inline SearchConfig read_search(Section s, std::uint64_t seed, unsigned threads) {
  SearchConfig c;
  c.lower = s.get<std::vector<double>>("lower", {});
  c.upper = s.get<std::vector<double>>("upper", {});
  if (c.lower.size() != c.upper.size()) s.problem("lower/upper", "must have the same length");
  c.population_size = s.get("population_size", c.population_size);
  c.generations = s.get("generations", c.generations);
  c.mutation_scale = s.get("mutation_scale", c.mutation_scale);
  c.crossover_rate = s.get("crossover_rate", c.crossover_rate);
  c.elite_count = s.get("elite_count", c.elite_count);
  c.restarts = s.get("restarts", c.restarts);
  c.final_mutation_ratio = s.get("final_mutation_ratio", c.final_mutation_ratio);
  c.seed = seed;
  c.threads = threads;
  // Box-independent checks now; the box is checked once the dimension is known.
  auto probe = c;
  probe.lower.assign(1, 0.0);
  probe.upper.assign(1, 1.0);
  for (const auto& p : search_config_problems(probe, 1)) s.problem(p);
  s.reject_unknown();
  return c;
}

inline void check_box(const SearchConfig& c, std::size_t dim, const std::string& where) {
  if (c.lower.empty() && c.upper.empty()) return;
  const auto p = search_config_problems(c, dim);
  if (!p.empty()) throw parameter_error(where + ": " + p.front());
}

struct StaticDataConfig {
  std::string path;
  StaticSchema schema;
  StaticReadOptions read;
};

inline StaticDataConfig read_static_data(Section s) {
  StaticDataConfig d;
  d.path = s.req<std::string>("path");
  if (!d.path.empty() && !std::filesystem::exists(d.path)) s.problem("path", "'" + d.path + "' does not exist");
  auto cols = s.sub("columns");
  d.schema.x = cols.get<std::vector<std::string>>("x", {});
  d.schema.a = cols.get<std::string>("a", d.schema.a);
  d.schema.y = cols.get<std::string>("y", d.schema.y);
  d.schema.delta = cols.get<std::string>("delta", d.schema.delta);
  d.schema.pscore = cols.opt<std::string>("pscore");
  cols.reject_unknown();
  d.read.default_pscore = s.opt<double>("default_pscore");
  if (d.read.default_pscore && !in_open_unit(*d.read.default_pscore))
    s.problem("default_pscore", "must lie strictly in (0,1)");
  d.read.validation.allow_nonpositive_times = s.get("allow_nonpositive_times", false);
  s.reject_unknown();
  return d;
}

struct DynamicDataConfig {
  std::string path;
  DynamicSchema schema;
  double s = 1.0, pi1 = 0.5, pi2 = 0.5;
  ValidationOptions validation;
};

inline DynamicDataConfig read_dynamic_data(Section s) {
  DynamicDataConfig d;
  d.path = s.req<std::string>("path");
  if (!d.path.empty() && !std::filesystem::exists(d.path)) s.problem("path", "'" + d.path + "' does not exist");
  auto cols = s.sub("columns");
  d.schema.x1 = cols.get<std::vector<std::string>>("x1", {});
  d.schema.d1 = cols.get<std::string>("d1", d.schema.d1);
  d.schema.z = cols.get<std::string>("z", d.schema.z);
  d.schema.x2 = cols.get<std::vector<std::string>>("x2", {});
  d.schema.d2 = cols.get<std::string>("d2", d.schema.d2);
  d.schema.y = cols.get<std::string>("y", d.schema.y);
  d.schema.delta = cols.get<std::string>("delta", d.schema.delta);
  cols.reject_unknown();
  d.s = s.req<double>("s", 1.0);
  s.check(d.s > 0.0, "s", "must be positive");
  d.pi1 = s.req<double>("pi1", 0.5);
  s.check(in_open_unit(d.pi1), "pi1", "must lie strictly in (0,1)");
  d.pi2 = s.req<double>("pi2", 0.5);
  s.check(in_open_unit(d.pi2), "pi2", "must lie strictly in (0,1)");
  d.validation.allow_nonpositive_times = s.get("allow_nonpositive_times", false);
  s.reject_unknown();
  return d;
}

inline WeightOptions read_weights(Section& s) {
  WeightOptions w;
  w.floor = s.get("floor", w.floor);
  s.check(w.floor > 0.0 && w.floor <= 1.0, "floor", "must lie in (0,1]");
  w.left_limit = s.get("left_limit_weights", false);
  return w;
}

// Static censoring model. The covariate index is 1-based in the config.
inline FitOptions read_censoring(Section s) {
  FitOptions f;
  f.weights = read_weights(s);
  const auto model = s.get<std::string>("model", "km");
  if (model == "km") f.censoring = CensoringModel::km;
  else if (model == "local_km") f.censoring = CensoringModel::local_km;
  else if (model == "naive") f.censoring = CensoringModel::naive;
  else s.problem("model", "must be km, local_km or naive");
  const auto cov = s.get<int>("covariate", 1);
  s.check(cov >= 1, "covariate", "must be >= 1");
  f.local_covariate = static_cast<std::size_t>(std::max(cov, 1) - 1);
  const auto kernel = s.get<std::string>("kernel", "gaussian_density");
  if (kernel == "gaussian_density") f.kernel.kind = KernelSpec::Kind::gaussian_density;
  else if (kernel == "normal_cdf") f.kernel.kind = KernelSpec::Kind::normal_cdf;
  else s.problem("kernel", "must be gaussian_density or normal_cdf");
  f.kernel.bandwidth = s.get("bandwidth", f.kernel.bandwidth);
  s.check(f.kernel.bandwidth > 0.0, "bandwidth", "must be positive");
  f.local.exact_limit = s.get("exact_limit", f.local.exact_limit);
  f.local.grid_points = s.get("grid_points", f.local.grid_points);
  s.check(f.local.grid_points >= 2, "grid_points", "must be >= 2");
  s.reject_unknown();
  return f;
}

inline std::optional<double> read_cutoff(Section& s) {
  auto m = s.opt<double>("cutoff");
  if (m && !(*m > 0.0)) s.problem("cutoff", "must be positive");
  return m;
}

inline double read_tau(Section& s, double fallback = 0.5) {
  const double tau = s.get("tau", fallback);
  s.check(in_open_unit(tau), "tau", "must lie strictly in (0,1)");
  return tau;
}

inline std::optional<Example> read_example(Section& s, bool required) {
  auto name = required ? std::optional<std::string>(s.req<std::string>("example")) : s.opt<std::string>("example");
  if (!name || name->empty()) return std::nullopt;
  try {
    return parse_example(*name);
  } catch (const parameter_error& e) {
    s.problem("example", e.what());
    return std::nullopt;
  }
}

}  // namespace qdr::cli
