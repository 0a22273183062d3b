#pragma once

// Command-line front end. Each command returns its process exit code:
// 0 ok, 2 input error, 3 pipeline error. Requires CLI11 and nlohmann/json.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vscout/bench.hpp"
#include "vscout/chart.hpp"
#include "vscout/csv.hpp"
#include "vscout/pipeline.hpp"
#include "vscout/record.hpp"
#include "vscout/simgen.hpp"

namespace vscout::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitPipeline = 3;

namespace detail {

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace detail

struct DetectOptions {
  std::string input;
  std::string truth;
  std::string config;
  std::uint64_t seed = 0;
  std::string output;
  std::string chart;
};

struct SimulateOptions {
  std::string dist = "normal";
  std::size_t n = 500;
  std::size_t p = 150;
  double delta = 0.0;
  double gamma = 0.0;
  std::string shift = "none";
  std::uint64_t seed = 0;
  std::string output;
  std::string labels;
};

struct BenchmarkOptions {
  std::string scenarios;
  std::string output;
  unsigned workers = 1;
};

struct ChartOptions {
  std::string record;
  std::string output;
};

inline int cmd_detect(const DetectOptions& o, std::ostream& out, std::ostream& err) {
  PipelineConfig cfg;
  DataMatrix data;
  std::optional<Flags> truth;
  try {
    if (!o.config.empty()) cfg = pipeline_config_from_json(detail::read_json_file(o.config));
    data = read_data_csv(o.input);
    if (static_cast<std::size_t>(data.rows()) < kMinPipelineRows) {
      throw InputError(o.input + ": pipeline needs at least " + std::to_string(kMinPipelineRows) + " observations");
    }
    if (!o.truth.empty()) {
      truth = read_truth_csv(o.truth);
      if (truth->size() != static_cast<std::size_t>(data.rows())) {
        throw InputError(o.truth + ": label count does not match the number of observations");
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  Json record;
  ChartData chart;
  try {
    RngStream rng(o.seed);
    const VscoutResult result = run_vscout(data, cfg, rng);
    std::optional<MetricsReport> metrics;
    if (truth) metrics = evaluate(*truth, result);
    record = make_run_record(result, cfg, o.seed, data.cols(), metrics);
    chart = chart_data_from_record(record);
  } catch (const std::exception& e) {
    err << "pipeline error: " << e.what() << '\n';
    return kExitPipeline;
  }

  try {
    const std::string text = record.dump(2) + "\n";
    if (o.output.empty() || o.output == "-") {
      out << text;
    } else {
      detail::write_text_file(o.output, text);
    }
    if (!o.chart.empty()) detail::write_text_file(o.chart, render_control_chart(chart));
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  try {
    ScenarioSpec spec;
    spec.dist = distribution_from_string(o.dist);
    spec.shift = shift_from_string(o.shift);
    spec.n = o.n;
    spec.p = o.p;
    spec.delta = o.delta;
    spec.gamma = o.gamma;
    spec.seed = o.seed;
    RngStream rng(o.seed);
    const LabeledSample sample = generate(spec, rng);
    if (sample.contamination_warning) err << "warning: gamma * n < 1, no observations were shifted\n";

    std::ostringstream data;
    write_data_csv(data, sample.x.matrix());
    if (o.output.empty() || o.output == "-") {
      out << data.str();
    } else {
      detail::write_text_file(o.output, data.str());
    }
    if (!o.labels.empty()) {
      std::ostringstream labels;
      write_truth_csv(labels, sample.truth);
      detail::write_text_file(o.labels, labels.str());
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

inline int cmd_benchmark(const BenchmarkOptions& o, std::ostream& out, std::ostream& err) {
  BenchmarkPlan plan;
  try {
    plan = benchmark_plan_from_json(detail::read_json_file(o.scenarios));
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const std::vector<ReplicationRow> rows = run_benchmark(plan, o.workers);
  std::size_t ok = 0;
  for (const auto& r : rows) {
    if (r.metrics) {
      ++ok;
    } else {
      err << "replication " << r.scenario_id << '/' << r.replication << " failed: " << r.error << '\n';
    }
  }
  std::ostringstream csv;
  write_benchmark_csv(csv, plan, rows);
  try {
    if (o.output.empty() || o.output == "-") {
      out << csv.str();
    } else {
      detail::write_text_file(o.output, csv.str());
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return ok > 0 ? kExitOk : kExitPipeline;
}

inline int cmd_chart(const ChartOptions& o, std::ostream& out, std::ostream& err) {
  try {
    const ChartData data = chart_data_from_record(detail::read_json_file(o.record));
    const std::string svg = render_control_chart(data);
    if (o.output.empty() || o.output == "-") {
      out << svg;
    } else {
      detail::write_text_file(o.output, svg);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

// Parses argv (without the program name) and dispatches.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"vscout: retrospective anomaly detection for high-dimensional process data", "vscout"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  DetectOptions detect;
  auto* d = app.add_subcommand("detect", "run the pipeline on a CSV file and write a run record");
  d->add_option("--input", detect.input, "data CSV with header x1..xp")->required();
  d->add_option("--truth", detect.truth, "truth CSV with header 'label'");
  d->add_option("--config", detect.config, "pipeline configuration (JSON)");
  d->add_option("--seed", detect.seed, "random seed")->capture_default_str();
  d->add_option("--output", detect.output, "run record path (default stdout)");
  d->add_option("--chart", detect.chart, "also write an SVG control chart");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "generate a labelled Monte Carlo data set");
  s->add_option("--dist", sim.dist, "normal | t5 | lognormal | mixed | multimodal")->capture_default_str();
  s->add_option("--n", sim.n, "observations")->capture_default_str();
  s->add_option("--p", sim.p, "variables")->capture_default_str();
  s->add_option("--delta", sim.delta, "mean shift")->capture_default_str();
  s->add_option("--gamma", sim.gamma, "contamination fraction")->capture_default_str();
  s->add_option("--shift", sim.shift, "none | transient | sustained")->capture_default_str();
  s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  s->add_option("--output", sim.output, "data CSV path (default stdout)");
  s->add_option("--labels", sim.labels, "truth CSV path");

  BenchmarkOptions bench;
  bench.workers = std::max(1u, std::thread::hardware_concurrency());
  auto* b = app.add_subcommand("benchmark", "run Monte Carlo replications of scenarios");
  b->add_option("--scenarios", bench.scenarios, "scenario file (JSON)")->required();
  b->add_option("--output", bench.output, "result CSV path (default stdout)");
  b->add_option("--workers", bench.workers, "parallel workers")->check(CLI::PositiveNumber);

  ChartOptions chart;
  auto* c = app.add_subcommand("chart", "render a run record as an SVG control chart");
  c->add_option("--record", chart.record, "run record from 'detect'")->required();
  c->add_option("--output", chart.output, "SVG path (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  if (*d) return cmd_detect(detect, out, err);
  if (*s) return cmd_simulate(sim, out, err);
  if (*b) return cmd_benchmark(bench, out, err);
  return cmd_chart(chart, out, err);
}

}  // namespace vscout::cli
