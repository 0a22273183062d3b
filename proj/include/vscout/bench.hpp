#pragma once

// Monte Carlo benchmark: scenarios x replications, fanned out over a
// bounded worker pool. Replication r of a scenario uses seed base + r for
// both data generation and the pipeline, so results do not depend on the
// number of workers.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "vscout/record.hpp"
#include "vscout/simgen.hpp"

namespace vscout {

struct BenchmarkScenario {
  std::string id;
  ScenarioSpec spec;  // spec.seed is the base seed of the replications
  int replications = 1;
};

struct BenchmarkPlan {
  std::vector<BenchmarkScenario> scenarios;
  PipelineConfig config;
};

struct ReplicationRow {
  std::string scenario_id;
  int replication = 0;
  std::optional<MetricsReport> metrics;
  double runtime_seconds = 0.0;
  std::string error;
};

inline BenchmarkPlan benchmark_plan_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"scenarios", "replications", "base_seed", "config"}, "scenario file");
  BenchmarkPlan plan;
  int default_reps = 1;
  std::uint64_t base_seed = 0;
  detail::read_if(j, "replications", default_reps);
  detail::read_if(j, "base_seed", base_seed);
  if (j.contains("config")) plan.config = pipeline_config_from_json(j.at("config"));
  if (!j.contains("scenarios") || !j.at("scenarios").is_array()) throw ConfigError("scenario file needs a 'scenarios' list");
  int counter = 0;
  for (const Json& s : j.at("scenarios")) {
    detail::reject_unknown_keys(s, {"id", "dist", "n", "p", "delta", "gamma", "shift", "seed", "replications"},
                                "scenario");
    BenchmarkScenario sc;
    sc.id = "scenario" + std::to_string(++counter);
    sc.replications = default_reps;
    sc.spec.seed = base_seed;
    std::string dist = "normal";
    std::string shift = "none";
    detail::read_if(s, "id", sc.id);
    detail::read_if(s, "dist", dist);
    detail::read_if(s, "shift", shift);
    detail::read_if(s, "n", sc.spec.n);
    detail::read_if(s, "p", sc.spec.p);
    detail::read_if(s, "delta", sc.spec.delta);
    detail::read_if(s, "gamma", sc.spec.gamma);
    detail::read_if(s, "seed", sc.spec.seed);
    detail::read_if(s, "replications", sc.replications);
    sc.spec.dist = distribution_from_string(dist);
    sc.spec.shift = shift_from_string(shift);
    sc.spec.validate();
    if (sc.replications < 1) throw ConfigError("replications must be >= 1");
    plan.scenarios.push_back(std::move(sc));
  }
  if (plan.scenarios.empty()) throw ConfigError("scenario file lists no scenarios");
  return plan;
}

inline ReplicationRow run_replication(const BenchmarkScenario& sc, int replication, const PipelineConfig& cfg) {
  ReplicationRow row{sc.id, replication, std::nullopt, 0.0, ""};
  const auto start = std::chrono::steady_clock::now();
  try {
    ScenarioSpec spec = sc.spec;
    spec.seed = sc.spec.seed + static_cast<std::uint64_t>(replication);
    RngStream rng(spec.seed);
    const LabeledSample sample = generate(spec, rng);
    const VscoutResult result = run_vscout(sample.x, cfg, rng);
    row.metrics = evaluate(sample.truth, result);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

// Rows are ordered by (scenario, replication) regardless of `workers`.
inline std::vector<ReplicationRow> run_benchmark(const BenchmarkPlan& plan, unsigned workers) {
  struct Task {
    std::size_t scenario;
    int replication;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < plan.scenarios.size(); ++s)
    for (int r = 0; r < plan.scenarios[s].replications; ++r) tasks.push_back({s, r});

  std::vector<ReplicationRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      rows[t] = run_replication(plan.scenarios[tasks[t].scenario], tasks[t].replication, plan.config);
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1))));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

namespace detail {

inline std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

struct RunningStats {
  std::vector<double> values;
  void add(const std::optional<double>& v) {
    if (v) values.push_back(*v);
  }
  std::optional<double> mean() const {
    if (values.empty()) return std::nullopt;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  // Sample sd; undefined (empty cell) below two values.
  std::optional<double> sd() const {
    if (values.size() < 2) return std::nullopt;
    const double m = *mean();
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
};

}  // namespace detail

inline constexpr const char* kBenchmarkMetricNames[] = {"recall", "precision", "fpr", "f1", "auroc", "inlier_retention"};

inline std::vector<std::optional<double>> metric_values(const std::optional<MetricsReport>& m) {
  if (!m) return std::vector<std::optional<double>>(6);
  return {m->recall, m->precision, m->fpr, m->f1, m->auroc, m->inlier_retention};
}

// Detail table, a blank line, then one aggregate row per scenario with the
// mean and standard deviation of every metric over successful replications.
inline void write_benchmark_csv(std::ostream& out, const BenchmarkPlan& plan, const std::vector<ReplicationRow>& rows) {
  out << "scenario_id,replication,recall,precision,fpr,f1,auroc,inlier_retention,runtime_seconds,error\n";
  for (const auto& r : rows) {
    out << detail::csv_escape(r.scenario_id) << ',' << r.replication;
    for (const auto& v : metric_values(r.metrics)) out << ',' << detail::csv_cell(v);
    out << ',' << format_double(r.runtime_seconds) << ',' << detail::csv_escape(r.error) << '\n';
  }
  out << "\nscenario_id,replications_ok";
  for (const char* name : kBenchmarkMetricNames) out << ',' << name << "_mean," << name << "_sd";
  out << ",runtime_seconds_mean\n";
  for (const auto& sc : plan.scenarios) {
    std::vector<detail::RunningStats> stats(6);
    detail::RunningStats runtime;
    int ok = 0;
    for (const auto& r : rows) {
      if (r.scenario_id != sc.id) continue;
      runtime.add(r.runtime_seconds);
      if (!r.metrics) continue;
      ++ok;
      const auto values = metric_values(r.metrics);
      for (std::size_t k = 0; k < 6; ++k) stats[k].add(values[k]);
    }
    out << detail::csv_escape(sc.id) << ',' << ok;
    for (const auto& s : stats) out << ',' << detail::csv_cell(s.mean()) << ',' << detail::csv_cell(s.sd());
    out << ',' << detail::csv_cell(runtime.mean()) << '\n';
  }
}

}  // namespace vscout
