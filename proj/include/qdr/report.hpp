#pragma once

// JSON serialization of fit, inference and simulation reports.

#include <nlohmann/json.hpp>

#include "qdr/dynamic.hpp"
#include "qdr/inference.hpp"
#include "qdr/policy.hpp"
#include "qdr/simgen.hpp"
#include "qdr/survival.hpp"

namespace qdr {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using json = nlohmann::json;

inline void to_json(json& j, const IndexRule& r) {
  j = json{{"sign", r.sign}, {"tail", r.tail}, {"coefficients", r.coefficients()}};
}

inline void to_json(json& j, const DynamicRule& r) {
  j = json{{"stage1", r.stage1}, {"stage2", r.stage2}, {"stage2_features", r.stage2_features}};
}

inline void to_json(json& j, const SurvivalCurve& c) {
  j = json::array();
  for (std::size_t k = 0; k < c.jump_times().size(); ++k) j.push_back({c.jump_times()[k], c.values()[k]});
}

inline void to_json(json& j, const PolicyFitReport& r) {
  j = json{{"rule", r.rule},
           {"value", r.value},
           {"tau", r.tau},
           {"n", r.n},
           {"n_effective", r.n_effective},
           {"censoring_rate", r.censoring_rate},
           {"evaluations", r.evaluations},
           {"objective_trace", r.objective_trace}};
}

inline void to_json(json& j, const DynamicFitReport& r) {
  j = json{{"rule", r.rule},
           {"value", r.value},
           {"tau", r.tau},
           {"n", r.n},
           {"n_effective", r.n_effective},
           {"stage1_compliers", r.stage1_compliers},
           {"stage2_compliers", r.stage2_compliers},
           {"censoring_rate", r.censoring_rate},
           {"evaluations", r.evaluations},
           {"objective_trace", r.objective_trace}};
}

inline void to_json(json& j, const CoefficientInterval& c) { j = json{c.lo, c.hi}; }

inline void to_json(json& j, const InferenceReport& r) {
  j = json{{"method", r.method},
           {"interval", r.interval},
           {"beta_bar", r.beta_bar},
           {"ci", r.ci},
           {"alpha", r.alpha},
           {"v_hat_plugged", r.v_hat_plugged},
           {"replicates_requested", r.replicates_requested},
           {"replicates_used", r.replicates_used},
           {"replicates_dropped", r.replicates_dropped},
           {"warnings", r.warnings}};
  if (r.method == "smoothed") {
    j["bandwidth_used"] = r.bandwidth_used;
    j["degenerate_objective"] = r.degenerate_objective;
    if (!r.cv_grid.empty()) j["cv"] = json{{"grid", r.cv_grid}, {"scores", r.cv_scores}};
  } else {
    j["m"] = r.m;
  }
}

inline void to_json(json& j, const TruthResult& t) {
  j = json{{"signs", t.signs}, {"params", t.params}, {"value", t.value}, {"evaluations", t.evaluations},
           {"tied", t.tied}};
}

inline void to_json(json& j, const Truth& t) {
  j = json{{"sign", t.sign}, {"tail", t.tail}, {"q", t.q}};
  if (!t.tail2.empty()) {
    j["sign2"] = t.sign2;
    j["tail2"] = t.tail2;
  }
}

inline void to_json(json& j, const Summary& s) {
  j = json{{"bias", s.bias},
           {"sd", s.sd},
           {"rmse", s.rmse},
           {"bias_q", s.bias_q},
           {"sd_q", s.sd_q},
           {"rmse_q", s.rmse_q},
           {"sign_error_rate", s.sign_error_rate},
           {"correct_sign_runs", s.correct_sign_runs},
           {"mean_censoring", s.mean_censoring}};
}

inline void to_json(json& j, const CoverageResult& c) {
  j = json{{"coverage", c.coverage}, {"mean_length", c.mean_length}, {"sign_errors", c.sign_errors},
           {"replications", c.rows.size()}};
}

}  // namespace qdr
