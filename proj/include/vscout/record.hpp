#pragma once

// JSON documents: the pipeline configuration file and the run record.
// Requires nlohmann/json on the include path.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "vscout/chart.hpp"
#include "vscout/csv.hpp"
#include "vscout/metrics.hpp"
#include "vscout/pipeline.hpp"

namespace vscout {

inline constexpr int kRunRecordSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline Json to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},         {"latent", c.latent},   {"learning_rate", c.learning_rate},
          {"beta", c.beta},             {"kl_threshold", c.kl_threshold}, {"patience", c.patience},
          {"max_epochs", c.max_epochs}, {"batch_size", c.batch_size},     {"a0", c.a0},
          {"b0", c.b0}};
}

inline Json to_json(const EnsembleConfig& c) {
  Json detectors = Json::array();
  for (Detector d : c.detectors) detectors.push_back(to_string(d));
  return {{"detectors", detectors},
          {"rule", to_string(c.rule)},
          {"per_detector_alpha", c.per_detector_alpha},
          {"contamination_cap", c.contamination_cap},
          {"knn_k", c.knn_k},
          {"lof_k", c.lof_k},
          {"iforest_trees", c.iforest_trees},
          {"iforest_subsample", c.iforest_subsample},
          {"hbos_bins", c.hbos_bins},
          {"boxplot_when_univariate", c.boxplot_when_univariate}};
}

inline Json to_json(const PeltConfig& c) {
  return {{"penalty", c.penalty}, {"min_segment_length", c.min_segment_length}};
}

inline Json to_json(const PipelineConfig& c) {
  Json j = {{"train", to_json(c.train)},
            {"ensemble", to_json(c.ensemble)},
            {"pelt", to_json(c.pelt)},
            {"alpha_t2", c.alpha_t2},
            {"alpha_rec", c.alpha_rec},
            {"refine_epochs", c.refine_epochs},
            {"recompute_changepoints", c.recompute_changepoints},
            {"cap_final_ensemble", c.cap_final_ensemble}};
  j["alpha_global"] = c.alpha_global ? Json(*c.alpha_global) : Json(nullptr);
  return j;
}

// Unknown keys anywhere in the document are errors.
inline PipelineConfig pipeline_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"train", "ensemble", "pelt", "alpha_t2", "alpha_rec", "refine_epochs", "alpha_global",
                               "recompute_changepoints", "cap_final_ensemble"},
                              "config");
  PipelineConfig c;
  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::reject_unknown_keys(t,
                                {"hidden", "latent", "learning_rate", "beta", "kl_threshold", "patience", "max_epochs",
                                 "batch_size", "a0", "b0"},
                                "config.train");
    detail::read_if(t, "hidden", c.train.hidden);
    detail::read_if(t, "latent", c.train.latent);
    detail::read_if(t, "learning_rate", c.train.learning_rate);
    detail::read_if(t, "beta", c.train.beta);
    detail::read_if(t, "kl_threshold", c.train.kl_threshold);
    detail::read_if(t, "patience", c.train.patience);
    detail::read_if(t, "max_epochs", c.train.max_epochs);
    detail::read_if(t, "batch_size", c.train.batch_size);
    detail::read_if(t, "a0", c.train.a0);
    detail::read_if(t, "b0", c.train.b0);
  }
  if (j.contains("ensemble")) {
    const Json& e = j.at("ensemble");
    detail::reject_unknown_keys(e,
                                {"detectors", "rule", "per_detector_alpha", "contamination_cap", "knn_k", "lof_k",
                                 "iforest_trees", "iforest_subsample", "hbos_bins", "boxplot_when_univariate"},
                                "config.ensemble");
    if (e.contains("detectors")) {
      std::vector<std::string> names;
      detail::read_if(e, "detectors", names);
      c.ensemble.detectors.clear();
      for (const auto& name : names) c.ensemble.detectors.push_back(detector_from_string(name));
    }
    if (e.contains("rule")) {
      std::string rule;
      detail::read_if(e, "rule", rule);
      c.ensemble.rule = rule_from_string(rule);
    }
    detail::read_if(e, "per_detector_alpha", c.ensemble.per_detector_alpha);
    detail::read_if(e, "contamination_cap", c.ensemble.contamination_cap);
    detail::read_if(e, "knn_k", c.ensemble.knn_k);
    detail::read_if(e, "lof_k", c.ensemble.lof_k);
    detail::read_if(e, "iforest_trees", c.ensemble.iforest_trees);
    detail::read_if(e, "iforest_subsample", c.ensemble.iforest_subsample);
    detail::read_if(e, "hbos_bins", c.ensemble.hbos_bins);
    detail::read_if(e, "boxplot_when_univariate", c.ensemble.boxplot_when_univariate);
  }
  if (j.contains("pelt")) {
    const Json& p = j.at("pelt");
    detail::reject_unknown_keys(p, {"penalty", "min_segment_length"}, "config.pelt");
    detail::read_if(p, "penalty", c.pelt.penalty);
    detail::read_if(p, "min_segment_length", c.pelt.min_segment_length);
  }
  detail::read_if(j, "alpha_t2", c.alpha_t2);
  detail::read_if(j, "alpha_rec", c.alpha_rec);
  detail::read_if(j, "refine_epochs", c.refine_epochs);
  detail::read_if(j, "recompute_changepoints", c.recompute_changepoints);
  detail::read_if(j, "cap_final_ensemble", c.cap_final_ensemble);
  if (j.contains("alpha_global") && !j.at("alpha_global").is_null()) {
    double a = 0.0;
    detail::read_if(j, "alpha_global", a);
    c.alpha_global = a;
  }
  c.validate();
  return c;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const MetricsReport& m) {
  return {{"recall", optional_json(m.recall)},
          {"precision", m.precision},
          {"fpr", m.fpr},
          {"f1", m.f1},
          {"auroc", optional_json(m.auroc)},
          {"inlier_retention", m.inlier_retention},
          {"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn}};
}

// Metrics for a finished run; AUROC uses the continuous anomaly score.
inline MetricsReport evaluate(const Flags& truth, const VscoutResult& r) {
  MetricsReport m = score_labels(truth, r.flags.y_hat);
  try {
    m.auroc = auroc(truth, r.flags.anomaly_score);
  } catch (const UndefinedMetricError&) {
  }
  return m;
}

inline Json make_run_record(const VscoutResult& r, const PipelineConfig& cfg, std::uint64_t seed, Index p,
                            const std::optional<MetricsReport>& metrics) {
  const FlagSet& f = r.flags;
  const Diagnostics& d = r.diagnostics;
  Json obs = Json::array();
  for (std::size_t i = 0; i < f.y_hat.size(); ++i) {
    obs.push_back({{"index", i + 1},
                   {"y_hat", f.y_hat[i]},
                   {"c", f.c[i]},
                   {"e", f.e[i]},
                   {"u", f.u[i]},
                   {"q", f.q[i]},
                   {"anomaly_score", f.anomaly_score[i]},
                   {"t2", r.t2[i]},
                   {"recon_error", r.recon_error[i]}});
  }
  Json counts = Json::array();
  for (const auto& c : d.detector_counts) {
    counts.push_back({{"detector", c.detector_id}, {"provisional", c.provisional}, {"final", c.final}});
  }
  Json record = {
      {"schema_version", kRunRecordSchemaVersion},
      {"tool", "vscout"},
      {"tool_version", kToolVersion},
      {"seed", seed},
      {"config", to_json(cfg)},
      {"summary",
       {{"n", f.y_hat.size()},
        {"p", p},
        {"d_eff", r.latent.d_eff()},
        {"d_eff_initial", d.relevant_initial.size()},
        {"relevant", r.latent.relevant},
        {"relevant_changed", d.relevant_changed},
        {"tau_star", d.tau_star ? Json(*d.tau_star) : Json(nullptr)},
        {"changepoints", d.segmentation.changepoints},
        {"n_in", r.baseline.n_in},
        {"t2_threshold", r.baseline.t2_threshold},
        {"recon_cutoff", r.baseline.recon_cutoff},
        {"ridge_applied", r.baseline.ridge_applied},
        {"flagged", count_flags(f.y_hat)}}},
      {"diagnostics",
       {{"loss_history", d.loss_history},
        {"refine_loss_history", d.refine_loss_history},
        {"detector_counts", counts},
        {"alpha_t2", d.alpha_t2},
        {"alpha_rec", d.alpha_rec},
        {"per_detector_alpha", d.per_detector_alpha},
        {"calibration_note", d.calibration_note}}},
      {"observations", obs}};
  if (metrics) record["metrics"] = to_json(*metrics);
  return record;
}

// Pulls the chart inputs out of a run record; malformed records raise
// InputError.
inline ChartData chart_data_from_record(const Json& record) {
  ChartData data;
  try {
    if (record.at("schema_version").get<int>() != kRunRecordSchemaVersion) {
      throw InputError("unsupported run record schema_version");
    }
    for (const auto& o : record.at("observations")) {
      data.score.push_back(o.at("anomaly_score").get<double>());
      data.flagged.push_back(o.at("y_hat").get<int>() != 0 ? 1 : 0);
    }
    const Json& tau = record.at("summary").at("tau_star");
    if (!tau.is_null()) data.tau_star = tau.get<std::size_t>();
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed run record: ") + e.what());
  }
  return data;
}

}  // namespace vscout
