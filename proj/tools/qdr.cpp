// qdr: command-line driver. One subcommand per invocation; settings come from
// an optional JSON config (comments allowed) holding exactly one command
// section, overridden by flags. Exit codes: 0 success, 1 estimation/runtime
// failure, 2 config or data validation failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "qdr/qdr.hpp"

namespace qdr::cli {
namespace {

const std::map<std::string, std::string> kSections = {
    {"fit", "fit"},           {"fit-dynamic", "fit_dynamic"}, {"value", "value"},      {"infer", "infer"},
    {"simulate", "simulate"}, {"truth", "truth"},             {"generate", "generate"},
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> output;
  std::optional<double> tau, alpha;
  std::optional<int> bootstrap;
  std::optional<std::string> bandwidth, method, example;
  std::optional<std::size_t> m, n, reps;
  std::vector<std::string> sets;
  bool timing = false;
};

struct ValidationFailure {
  std::vector<std::string> problems;
};

class Timer {
 public:
  explicit Timer(bool on) : on_(on) {}
  void mark(const std::string& phase) {
    if (!on_) return;
    const auto now = std::chrono::steady_clock::now();
    phases_[phase] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  bool on() const { return on_; }
  json to_json() const { return phases_; }

 private:
  bool on_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  json phases_ = json::object();
};

struct Context {
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  int verbosity = 1;
  Timer timer{false};
  std::string summary;
};

// --set key.sub=value: value parsed as JSON, else taken as a string.
void apply_set(json& section, const std::string& assignment, std::vector<std::string>& problems) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    problems.push_back("--set '" + assignment + "' must have the form key=value");
    return;
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &section;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->contains(parts[k]) || !(*node)[parts[k]].is_object()) (*node)[parts[k]] = json::object();
    node = &(*node)[parts[k]];
  }
  (*node)[parts.back()] = value;
}

json bandwidth_value(const std::string& s) {
  if (s == "cv") return s;
  json v = json::parse(s, nullptr, false);
  return v.is_number() ? v : json(s);
}

std::vector<double> coefficient_list(const IndexRule& r) { return r.coefficients(); }

std::string format_vec(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t k = 0; k < v.size(); ++k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.4g", k ? ", " : "", v[k]);
    s += buf;
  }
  return s + ")";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// fit / value / infer share the static data, censoring and search sections.

struct StaticPlan {
  StaticDataConfig data;
  double tau = 0.5;
  FitOptions fit;
  SearchConfig search;
};

StaticPlan read_static_plan(Section& sec, const Context& ctx, bool with_search) {
  StaticPlan p;
  p.data = read_static_data(sec.sub("data"));
  p.tau = read_tau(sec);
  p.fit = read_censoring(sec.sub("censoring"));
  p.fit.cutoff = read_cutoff(sec);
  if (with_search) p.search = read_search(sec.sub("search"), ctx.seed, ctx.threads);
  return p;
}

StaticDataset load_static(const StaticPlan& p, Context& ctx) {
  auto ds = read_static_csv(p.data.path, p.data.schema, p.data.read);
  ctx.timer.mark("load");
  return ds;
}

json run_fit(Section& sec, Context& ctx) {
  auto plan = read_static_plan(sec, ctx, true);
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};
  const auto ds = load_static(plan, ctx);
  check_box(plan.search, ds.dim() - 1, "fit.search");
  const auto prep = prepare_static(ds, plan.fit);
  ctx.timer.mark("censoring");
  const auto rep = fit_prepared(prep, {plan.tau}, plan.search);
  ctx.timer.mark("search");
  json out = rep;
  if (prep.curve) out["censoring_curve"] = *prep.curve;
  char buf[256];
  std::snprintf(buf, sizeof buf, "rule %s value %.6g n_effective %zu censoring %.3f",
                format_vec(coefficient_list(rep.rule)).c_str(), rep.value, rep.n_effective, rep.censoring_rate);
  ctx.summary = buf;
  return out;
}

json run_value(Section& sec, Context& ctx) {
  auto plan = read_static_plan(sec, ctx, false);
  auto rs = sec.sub("rule");
  IndexRule rule;
  rule.sign = rs.req<int>("sign", 1);
  rs.check(rule.sign == 1 || rule.sign == -1, "sign", "must be +1 or -1");
  rule.tail = rs.get<std::vector<double>>("tail", {});
  rs.reject_unknown();
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};
  const auto ds = load_static(plan, ctx);
  rule.check_dim(ds.dim());
  const auto prep = prepare_static(ds, plan.fit);
  const StaticObjective obj(prep.data, prep.g, {plan.tau});
  const double q = q_hat(prep.data, rule, prep.g, {plan.tau});
  ctx.timer.mark("evaluate");
  char buf[256];
  std::snprintf(buf, sizeof buf, "rule %s q_hat %.6g", format_vec(rule.coefficients()).c_str(), q);
  ctx.summary = buf;
  return json{{"rule", rule}, {"q_hat", q}, {"tau", plan.tau}, {"n_effective", obj.compliers(rule)},
              {"censoring_rate", prep.data.censoring_rate()}};
}

WeightLaw parse_weight_law(Section& s, const std::string& key) {
  const auto v = s.get<std::string>(key, "exponential");
  if (v == "exponential") return WeightLaw::exponential;
  if (v == "two_point") return WeightLaw::two_point;
  if (v == "unit") return WeightLaw::unit;
  s.problem(key, "must be exponential, two_point or unit");
  return WeightLaw::exponential;
}

// Smoothing / bootstrap keys shared by infer and simulate (coverage mode).
SmoothConfig read_smooth(Section& sec, const Context& ctx) {
  SmoothConfig c;
  c.alpha = sec.get("alpha", c.alpha);
  sec.check(in_open_unit(c.alpha), "alpha", "must lie strictly in (0,1)");
  c.bootstrap_reps = sec.get("bootstrap", c.bootstrap_reps);
  sec.check(c.bootstrap_reps >= 1, "bootstrap", "must be >= 1");
  if (const json* bw = sec.raw("bandwidth")) {
    if (bw->is_number()) c.bandwidth = bw->get<double>();
    else if (!(bw->is_string() && bw->get<std::string>() == "cv")) sec.problem("bandwidth", "must be a number or \"cv\"");
    if (c.bandwidth && !(*c.bandwidth > 0.0)) sec.problem("bandwidth", "must be positive");
  }
  c.cv_grid = sec.get<std::vector<double>>("cv_grid", {});
  c.folds = sec.get("folds", c.folds);
  const auto loss = sec.get<std::string>("cv_loss", "smoothed");
  if (loss == "smoothed") c.cv_loss = CvLoss::smoothed;
  else if (loss == "indicator") c.cv_loss = CvLoss::indicator;
  else sec.problem("cv_loss", "must be smoothed or indicator");
  const auto interval = sec.get<std::string>("interval", "pivot");
  if (interval == "pivot") c.interval = CiMethod::pivot;
  else if (interval == "percentile") c.interval = CiMethod::percentile;
  else sec.problem("interval", "must be pivot or percentile");
  c.weight_law = parse_weight_law(sec, "weight_law");
  c.seed = ctx.seed;
  c.threads = ctx.threads;
  for (const auto& p : smooth_config_problems(c)) sec.problem(p);
  return c;
}

json run_infer(Section& sec, Context& ctx) {
  auto plan = read_static_plan(sec, ctx, true);
  const auto method = sec.get<std::string>("method", "smoothed");
  sec.check(method == "smoothed" || method == "mn", "method", "must be smoothed or mn");
  SmoothConfig cfg = read_smooth(sec, ctx);
  cfg.search = plan.search;
  const auto m = sec.opt<std::size_t>("m");
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};

  const auto ds = load_static(plan, ctx);
  check_box(plan.search, ds.dim() - 1, "infer.search");
  const auto prep = prepare_static(ds, plan.fit);
  const auto prior = fit_prepared(prep, {plan.tau}, plan.search);
  ctx.timer.mark("fit");
  InferenceReport rep;
  if (method == "smoothed") {
    const auto point = fit_smoothed(prep, prior, cfg);
    ctx.timer.mark("smooth");
    rep = perturb_bootstrap(prep, prior, point, cfg);
  } else {
    const std::size_t mm = m.value_or(default_subsample_size(ds.size()));
    rep = m_out_of_n_bootstrap(ds, {plan.tau}, prior, plan.search, plan.fit, mm, cfg.bootstrap_reps, cfg.alpha,
                               ctx.seed, ctx.threads);
  }
  ctx.timer.mark("bootstrap");
  std::string s = "beta_bar " + format_vec(rep.beta_bar.coefficients());
  for (std::size_t j = 0; j < rep.ci.size(); ++j)
    s += " ci" + std::to_string(j + 2) + " " + format_vec({rep.ci[j].lo, rep.ci[j].hi});
  ctx.summary = s;
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return json{{"fit", prior}, {"inference", rep}};
}

// ---------------------------------------------------------------------------

json run_fit_dynamic(Section& sec, Context& ctx) {
  const auto data = read_dynamic_data(sec.sub("data"));
  const double tau = read_tau(sec);
  DynamicFitOptions opts;
  opts.cutoff = read_cutoff(sec);
  {
    auto cs = sec.sub("censoring");
    opts.weights = read_weights(cs);
    const auto model = cs.get<std::string>("model", "km");
    if (model == "naive") opts.naive = true;
    else if (model != "km") cs.problem("model", "must be km or naive for two-stage data");
    cs.reject_unknown();
  }
  // 1-based positions in h2 = (x1 coordinates, d1, x2 coordinates).
  const auto features = sec.get<std::vector<int>>("stage2_features", {});
  for (int f : features) {
    if (f < 1) sec.problem("stage2_features", "entries must be >= 1");
    else opts.stage2_features.push_back(static_cast<std::size_t>(f - 1));
  }
  const auto search = read_search(sec.sub("search"), ctx.seed, ctx.threads);
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};

  const auto ds = read_dynamic_csv(data.path, data.s, data.pi1, data.pi2, data.schema, data.validation);
  ctx.timer.mark("load");
  const std::size_t d2 = opts.stage2_features.empty() ? ds.history_dim() : opts.stage2_features.size();
  check_box(search, ds.dim1() - 1 + d2 - 1, "fit_dynamic.search");
  const auto rep = fit_dynamic(ds, {tau}, search, opts);
  ctx.timer.mark("search");
  char buf[320];
  std::snprintf(buf, sizeof buf, "stage1 %s stage2 %s value %.6g n_effective %zu censoring %.3f",
                format_vec(rep.rule.stage1.coefficients()).c_str(),
                format_vec(rep.rule.stage2.coefficients()).c_str(), rep.value, rep.n_effective, rep.censoring_rate);
  ctx.summary = buf;
  return rep;
}

// ---------------------------------------------------------------------------
// Simulation commands

std::optional<double> read_target(Section& sec, std::optional<Example> e) {
  auto t = sec.opt<double>("target_censoring");
  if (e && is_dynamic(*e) && !t && !sec.has("c0")) t = 0.15;
  return t;
}

Truth read_truth(Section& sec, Example e, double tau) {
  Truth t;
  try {
    t = published_truth(e, tau);
  } catch (const parameter_error&) {
    if (!sec.has("truth")) sec.problem("truth", "is required: no published truth for this example and tau");
  }
  auto ts = sec.sub("truth");
  t.sign = ts.get("sign", t.sign);
  t.tail = ts.get("tail", t.tail);
  t.q = ts.get("q", t.q);
  t.sign2 = ts.get("sign2", t.sign2);
  t.tail2 = ts.get("tail2", t.tail2);
  ts.reject_unknown();
  return t;
}

std::string summary_csv(const std::vector<std::pair<std::string, Summary>>& runs, Example e) {
  std::vector<std::string> names;
  const std::size_t k = runs.empty() ? 0 : runs.front().second.bias.size();
  for (std::size_t j = 0; j < k; ++j) {
    if (is_dynamic(e)) names.push_back(j == 0 ? "beta_2" : "zeta_2");
    else names.push_back("beta_" + std::to_string(j + 2));
  }
  std::string out = "method,quantity,bias,sd,rmse\n";
  for (const auto& [m, s] : runs) {
    for (std::size_t j = 0; j < k; ++j)
      out += m + "," + names[j] + "," + csv::format(s.bias[j]) + "," + csv::format(s.sd[j]) + "," +
             csv::format(s.rmse[j]) + "\n";
    out += m + ",Q," + csv::format(s.bias_q) + "," + csv::format(s.sd_q) + "," + csv::format(s.rmse_q) + "\n";
    out += m + ",sign_error_rate," + csv::format(s.sign_error_rate) + ",,\n";
  }
  return out;
}

json rows_json(const std::vector<ReplicationRow>& rows) {
  json a = json::array();
  for (const auto& r : rows) {
    json j{{"rep", r.rep}, {"seed", r.seed}, {"sign", r.sign}, {"tail", r.tail}, {"value", r.value},
           {"censoring_rate", r.censoring_rate}, {"n_effective", r.n_effective}};
    if (!r.tail2.empty()) {
      j["sign2"] = r.sign2;
      j["tail2"] = r.tail2;
    }
    a.push_back(std::move(j));
  }
  return a;
}

// One line per replication; coefficients are space-separated (stage 1, then stage 2).
std::string replication_csv(const std::string& method, const std::vector<ReplicationRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    std::string coef;
    for (double v : r.tail) coef += (coef.empty() ? "" : " ") + csv::format(v);
    for (double v : r.tail2) coef += " " + csv::format(v);
    out += method + "," + std::to_string(r.rep) + "," + std::to_string(r.seed) + "," + std::to_string(r.sign) + "," +
           (r.tail2.empty() ? std::string() : std::to_string(r.sign2)) + "," + coef + "," + csv::format(r.value) + "," + csv::format(r.censoring_rate) + "," +
           std::to_string(r.n_effective) + "\n";
  }
  return out;
}

json run_simulate(Section& sec, Context& ctx) {
  const auto ex = read_example(sec, true);
  const double tau = read_tau(sec);
  const auto n = sec.get<std::size_t>("n", 1000);
  sec.check(n >= 2, "n", "must be >= 2");
  const auto reps = sec.get<std::size_t>("reps", 100);
  sec.check(reps >= 1, "reps", "must be >= 1");
  const auto method = sec.get<std::string>("method", "both");
  sec.check(method == "new" || method == "naive" || method == "both" || method == "coverage", "method",
            "must be new, naive, both or coverage");
  const auto target = read_target(sec, ex);
  const auto c0 = sec.opt<double>("c0");
  FitOptions fit = read_censoring(sec.sub("censoring"));
  fit.cutoff = read_cutoff(sec);
  const auto search = read_search(sec.sub("search"), ctx.seed, ctx.threads);
  const auto table = sec.opt<std::string>("table");
  const auto rows_table = sec.opt<std::string>("replications_table");
  std::optional<SmoothConfig> smooth;
  if (method == "coverage") smooth = read_smooth(sec, ctx);
  Truth truth;
  if (ex) truth = read_truth(sec, *ex, tau);
  if (ex) {
    GeneratorSpec g;
    g.example = *ex;
    g.n = n;
    g.target_censoring = target;
    g.c0 = c0;
    for (const auto& p : generator_spec_problems(g)) sec.problem(p);
  }
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};

  json out{{"example", to_string(*ex)}, {"tau", tau}, {"n", n}, {"reps", reps}, {"seed", ctx.seed},
           {"truth", truth}, {"seed_rule", "replication r: data derive_seed(seed, 1, r), search derive_seed(seed, 2, r)"}};
  if (method == "coverage") {
    CoverageSpec cs;
    cs.example = *ex;
    cs.tau = tau;
    cs.n = n;
    cs.reps = reps;
    cs.seed = ctx.seed;
    cs.truth = truth;
    cs.search = search;
    cs.fit = fit;
    cs.smooth = *smooth;
    cs.threads = ctx.threads;
    const auto res = coverage_experiment(cs);
    ctx.timer.mark("coverage");
    out["coverage"] = res;
    out["alpha"] = smooth->alpha;
    out["bootstrap"] = smooth->bootstrap_reps;
    std::string csvt = "quantity,coverage,mean_length\n";
    for (std::size_t j = 0; j < res.coverage.size(); ++j)
      csvt += "beta_" + std::to_string(j + 2) + "," + csv::format(res.coverage[j]) + "," +
              csv::format(res.mean_length[j]) + "\n";
    if (table) write_text(*table, csvt);
    ctx.summary = "coverage " + format_vec(res.coverage) + " mean length " + format_vec(res.mean_length);
    return out;
  }

  std::vector<std::pair<std::string, Summary>> runs;
  std::string rows_csv = "method,rep,seed,sign,sign2,coefficients,value,censoring_rate,n_effective\n";
  out["methods"] = json::object();
  for (const std::string m : {"new", "naive"}) {
    if (method != "both" && method != m) continue;
    ExperimentSpec es;
    es.example = *ex;
    es.tau = tau;
    es.n = n;
    es.reps = reps;
    es.method = parse_method(m);
    es.seed = ctx.seed;
    es.truth = truth;
    es.search = search;
    es.fit = fit;
    es.target_censoring = target;
    es.c0 = c0;
    es.threads = ctx.threads;
    const auto res = mc_experiment(es);
    ctx.timer.mark(m);
    out["methods"][m] = json{{"summary", res.summary}, {"replications", rows_json(res.rows)}};
    runs.emplace_back(m, res.summary);
    rows_csv += replication_csv(m, res.rows);
  }
  if (rows_table) write_text(*rows_table, rows_csv);
  const auto text = summary_csv(runs, *ex);
  out["table"] = text;
  if (table) write_text(*table, text);
  std::string s;
  for (const auto& [m, sum] : runs) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s: bias %s bias_Q %.4g sign errors %.3f", s.empty() ? "" : "; ", m.c_str(),
                  format_vec(sum.bias).c_str(), sum.bias_q, sum.sign_error_rate);
    s += buf;
  }
  ctx.summary = s;
  return out;
}

json run_truth(Section& sec, Context& ctx) {
  const auto ex = read_example(sec, true);
  TruthRequest req;
  req.tau = read_tau(sec);
  req.n_mc = sec.get<std::size_t>("n_mc", req.n_mc);
  sec.check(req.n_mc >= 10, "n_mc", "must be >= 10");
  req.seed = ctx.seed;
  req.threads = ctx.threads;
  if (sec.has("grid")) {
    auto gs = sec.sub("grid");
    TruthGrid g = ex ? default_truth_grid(*ex) : TruthGrid{};
    g.coarse_step = gs.get("coarse_step", g.coarse_step);
    g.fine_step = gs.get("fine_step", g.fine_step);
    g.coarse_n = gs.get("coarse_n", g.coarse_n);
    g.top_k = gs.get("top_k", g.top_k);
    gs.check(g.coarse_step > 0.0 && g.fine_step > 0.0, "steps", "must be positive");
    gs.reject_unknown();
    req.grid = g;
  } else {
    sec.raw("grid");
  }
  if (const json* regions = sec.raw("regions")) {
    std::vector<TruthRegion> rs;
    if (!regions->is_array()) sec.problem("regions", "must be an array");
    else
      for (std::size_t k = 0; k < regions->size(); ++k) {
        Section r(&(*regions)[k], sec.path() + ".regions[" + std::to_string(k) + "]", sec.problems());
        TruthRegion tr;
        tr.signs = r.req<std::vector<int>>("signs");
        tr.lower = r.req<std::vector<double>>("lower");
        tr.upper = r.req<std::vector<double>>("upper");
        r.reject_unknown();
        rs.push_back(std::move(tr));
      }
    req.regions = std::move(rs);
  }
  const auto table = sec.opt<std::string>("table");
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};
  req.example = *ex;
  const auto res = truth_oracle(req);
  ctx.timer.mark("grid");
  json out{{"example", to_string(*ex)}, {"tau", req.tau}, {"n_mc", req.n_mc}, {"seed", req.seed}, {"result", res}};
  std::string csvt = "example,tau,signs,params,Q\n" + to_string(*ex) + "," + csv::format(req.tau) + ",";
  for (std::size_t k = 0; k < res.signs.size(); ++k) csvt += (k ? " " : "") + std::to_string(res.signs[k]);
  csvt += ",";
  for (std::size_t k = 0; k < res.params.size(); ++k) csvt += (k ? " " : "") + csv::format(res.params[k]);
  csvt += "," + csv::format(res.value) + "\n";
  out["table"] = csvt;
  try {
    out["published"] = published_truth(*ex, req.tau);
  } catch (const parameter_error&) {
  }
  if (table) write_text(*table, csvt);
  std::vector<double> signs(res.signs.begin(), res.signs.end());
  ctx.summary = "signs " + format_vec(signs) + " params " + format_vec(res.params) + " Q " + csv::format(res.value);
  return out;
}

json run_generate(Section& sec, Context& ctx) {
  const auto ex = read_example(sec, true);
  GeneratorSpec g;
  g.n = sec.get<std::size_t>("n", g.n);
  g.target_censoring = read_target(sec, ex);
  g.c0 = sec.opt<double>("c0");
  g.seed = ctx.seed;
  const auto path = sec.req<std::string>("path");
  const auto latents = sec.opt<std::string>("latents");
  g.keep_latents = latents.has_value();
  if (ex) {
    g.example = *ex;
    for (const auto& p : generator_spec_problems(g)) sec.problem(p);
  }
  sec.reject_unknown();
  if (!sec.problems().empty()) throw ValidationFailure{sec.problems()};

  json out{{"example", to_string(g.example)}, {"n", g.n}, {"seed", g.seed}, {"path", path}};
  if (!is_dynamic(g.example)) {
    const auto s = generate_static(g);
    write_static_csv(path, s.data);
    out["censoring_rate"] = s.data.censoring_rate();
    if (latents) {
      std::string t = "t0,t1,t,c\n";
      for (const auto& l : s.latents)
        t += csv::format(l.t0) + "," + csv::format(l.t1) + "," + csv::format(l.t) + "," + csv::format(l.c) + "\n";
      write_text(*latents, t);
    }
    ctx.summary = "wrote " + std::to_string(g.n) + " records, censoring " + csv::format(s.data.censoring_rate());
  } else {
    const auto s = generate_dynamic(g);
    write_dynamic_csv(path, s.data);
    out["censoring_rate"] = s.data.censoring_rate();
    out["c0"] = s.c0;
    out["s"] = s.data.s();
    if (latents) {
      std::string t = "t,c,t_00,t_01,t_10,t_11\n";
      for (const auto& l : s.latents) {
        t += csv::format(l.t) + "," + csv::format(l.draw.c);
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) t += "," + csv::format(l.draw.potential(a, b));
        t += "\n";
      }
      write_text(*latents, t);
    }
    ctx.summary = "wrote " + std::to_string(g.n) + " records, censoring " + csv::format(s.data.censoring_rate());
  }
  ctx.timer.mark("generate");
  if (latents) out["latents"] = *latents;
  return out;
}

// ---------------------------------------------------------------------------

int run(const std::string& command, const Flags& flags) {
  std::vector<std::string> problems;
  json root = json::object();
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) {
      std::cerr << "config: cannot open '" << flags.config << "'\n";
      return 2;
    }
    root = json::parse(in, nullptr, false, /*ignore_comments=*/true);
    if (root.is_discarded() || !root.is_object()) {
      std::cerr << "config: '" << flags.config << "' is not a valid JSON object\n";
      return 2;
    }
  }
  std::vector<std::string> present;
  for (const auto& [name, key] : kSections)
    if (root.contains(key)) present.push_back(key);
  if (present.size() > 1) {
    std::string names;
    for (const auto& p : present) names += (names.empty() ? "" : ", ") + p;
    std::cerr << "config: multiple command sections (" << names << "); exactly one is allowed\n";
    return 2;
  }
  const std::string key = kSections.at(command);
  if (present.size() == 1 && present.front() != key) {
    std::cerr << "config: section '" << present.front() << "' does not match command '" << command << "'\n";
    return 2;
  }
  if (!root.contains(key)) root[key] = json::object();
  json& sec_json = root[key];

  if (flags.seed) root["seed"] = *flags.seed;
  if (flags.threads) root["threads"] = *flags.threads;
  if (flags.output) root["output"] = *flags.output;
  if (flags.timing) root["timing"] = true;
  if (flags.tau) sec_json["tau"] = *flags.tau;
  if (flags.alpha) sec_json["alpha"] = *flags.alpha;
  if (flags.bootstrap) sec_json["bootstrap"] = *flags.bootstrap;
  if (flags.bandwidth) sec_json["bandwidth"] = bandwidth_value(*flags.bandwidth);
  if (flags.method) sec_json["method"] = *flags.method;
  if (flags.m) sec_json["m"] = *flags.m;
  if (flags.example) sec_json["example"] = *flags.example;
  if (flags.n) sec_json["n"] = *flags.n;
  if (flags.reps) sec_json["reps"] = *flags.reps;
  for (const auto& s : flags.sets) apply_set(sec_json, s, problems);

  Context ctx;
  Section top(&root, "", problems);
  ctx.seed = top.get<std::uint64_t>("seed", ctx.seed);
  ctx.threads = top.get<unsigned>("threads", 1);
  top.check(ctx.threads >= 1, "threads", "must be >= 1");
  const auto output = top.opt<std::string>("output");
  const bool timing = top.get("timing", false);
  ctx.verbosity = top.get("verbosity", 1);
  ctx.timer = Timer(timing);
  Section sec = top.sub(key);
  for (const auto& [name, k] : kSections) top.raw(k);
  top.reject_unknown();

  json result;
  try {
    if (command == "fit") result = run_fit(sec, ctx);
    else if (command == "fit-dynamic") result = run_fit_dynamic(sec, ctx);
    else if (command == "value") result = run_value(sec, ctx);
    else if (command == "infer") result = run_infer(sec, ctx);
    else if (command == "simulate") result = run_simulate(sec, ctx);
    else if (command == "truth") result = run_truth(sec, ctx);
    else result = run_generate(sec, ctx);
  } catch (const ValidationFailure& v) {
    std::cerr << "config: " << v.problems.size() << " problem(s)\n";
    for (const auto& p : v.problems) std::cerr << "  " << p << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << command << ": data error: " << e.what() << "\n";
    return 2;
  } catch (const parameter_error& e) {
    std::cerr << command << ": invalid setting: " << e.what() << "\n";
    return 2;
  } catch (const estimation_error& e) {
    std::cerr << command << ": estimation failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 1;
  }

  json report{{"schema_version", kSchemaVersion},
              {"library_version", kLibraryVersion},
              {"command", command},
              {"config", root},
              {"result", result}};
  if (timing) report["timing"] = ctx.timer.to_json();
  const std::string text = report.dump(2) + "\n";
  try {
    if (output) write_text(*output, text);
    else std::cout << text;
  } catch (const data_error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  if (ctx.verbosity > 0) (output ? std::cout : std::cerr) << command << ": " << ctx.summary << "\n";
  return 0;
}

}  // namespace
}  // namespace qdr::cli

int main(int argc, char** argv) {
  using namespace qdr::cli;
  CLI::App app{"Quantile-optimal individualized decision rules from censored data"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::string> help = {
      {"fit", "search the static rule maximizing the estimated tau-quantile"},
      {"fit-dynamic", "search the two-stage rule maximizing the estimated tau-quantile"},
      {"value", "estimate the tau-quantile value of a fixed static rule"},
      {"infer", "smoothed perturbation or m-out-of-n bootstrap intervals"},
      {"simulate", "Monte Carlo bias/SD (or coverage) study on a simulation design"},
      {"truth", "population truth by grid search over latent outcomes"},
      {"generate", "write a simulated dataset as CSV"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, key] : kSections) {
    auto* sc = app.add_subcommand(name, help.at(name));
    sc->add_option("--config,-c", flags.config, "JSON config file (comments allowed)");
    sc->add_option("--seed", flags.seed, "master seed");
    sc->add_option("--threads", flags.threads, "worker threads (results do not depend on it)");
    sc->add_option("--output,-o", flags.output, "write the JSON report here instead of stdout");
    sc->add_option("--tau", flags.tau, "quantile level");
    sc->add_option("--alpha", flags.alpha, "interval level is 1 - alpha");
    sc->add_option("--bootstrap", flags.bootstrap, "bootstrap replicates");
    sc->add_option("--bandwidth", flags.bandwidth, "smoothing bandwidth or 'cv'");
    sc->add_option("--method", flags.method, "infer: smoothed|mn; simulate: new|naive|both|coverage");
    sc->add_option("--m", flags.m, "m-out-of-n subsample size");
    sc->add_option("--example", flags.example, "ex1, ex2, ex3a, ex3b or ex3c");
    sc->add_option("--n", flags.n, "sample size");
    sc->add_option("--reps", flags.reps, "Monte Carlo replications");
    sc->add_option("--set", flags.sets, "override a setting of the command section: key.sub=value");
    sc->add_flag("--timing", flags.timing, "record wall-clock time per phase in the report");
    subs.push_back(sc);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (auto* sc : subs)
    if (sc->parsed()) return run(sc->get_name(), flags);
  return 2;
}
