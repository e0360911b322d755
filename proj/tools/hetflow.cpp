// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

// hetflow: run training benchmarks, compare reports, generate graphs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "hetflow/bench.hpp"

namespace {

using hetflow::kExitConfig;
using hetflow::kExitMismatch;
using hetflow::kExitOk;
using hetflow::kExitRuntime;

int do_run(const hetflow::RunConfig& config) {
  const auto result = hetflow::run(config);
  hetflow::write_outputs(result);
  if (config.out.empty()) std::cout << hetflow::format_csv(result);
  return kExitOk;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hetflow::ConfigError("report", "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw hetflow::ConfigError("report", path + ": " + e.what());
  }
}

int do_compare(const std::string& a, const std::string& b, double tolerance, const std::string& out) {
  const auto c = hetflow::compare(read_json(a), read_json(b), tolerance);
  const auto table = hetflow::format_comparison(c);
  if (out.empty()) {
    std::cout << table;
  } else {
    std::ofstream f(out);
    if (!f) throw hetflow::RunError("output", "cannot write " + out);
    f << table;
  }
  if (c.semantic_mismatch) {
    std::cerr << "semantic mismatch: loss divergence " << c.loss_divergence << " exceeds " << tolerance << '\n';
    return kExitMismatch;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hetflow: heterogeneous-graph mini-batch training on an emulated device"};
  app.require_subcommand(1);

  hetflow::RunConfig config;
  std::string model = "rgcn";
  std::string mode = "full";
  auto* run = app.add_subcommand("run", "train for some epochs and report kernel counts and timings");
  run->add_option("--dataset", config.dataset, "synth:<aifb|bgs|mutag|am>[/downscale] or a graph file")
      ->capture_default_str();
  run->add_option("--model", model, "rgcn or rgat")->capture_default_str();
  run->add_option("--layers", config.layers, "number of layers")->capture_default_str();
  run->add_option("--hidden", config.hidden, "hidden width")->capture_default_str();
  run->add_option("--batch-size", config.batch_size, "seeds per mini-batch")->capture_default_str();
  run->add_option("--fanout", config.fanout, "in-edges per (vertex, relation), one value or one per layer; -1 = all")
      ->delimiter(',')
      ->capture_default_str();
  run->add_option("--mode", mode, "baseline, reorg, reorg+merge, reorg+offload+parallel or full")
      ->capture_default_str();
  run->add_option("--workers", config.workers, "host selection workers (0 = all cores)")->capture_default_str();
  run->add_option("--queue-depth", config.queue_depth, "pipeline queue depth")->capture_default_str();
  run->add_option("--epochs", config.epochs, "epochs to run")->capture_default_str();
  run->add_option("--seed", config.seed, "run seed")->capture_default_str();
  run->add_option("--launch-overhead-us", config.launch_overhead_us, "emulated cost of one kernel launch")
      ->capture_default_str();
  run->add_flag("--fp64", config.fp64, "compute in double precision");
  run->add_option("--classes", config.num_classes, "number of label classes")->capture_default_str();
  run->add_option("--lr", config.learning_rate, "SGD learning rate")->capture_default_str();
  run->add_option("--out", config.out, "CSV report path (JSON summary is written next to it)");
  run->add_option("--trace-out", config.trace_out, "kernel trace, one JSON record per line");

  std::string report_a;
  std::string report_b;
  std::string compare_out;
  double tolerance = 1e-3;
  auto* cmp = app.add_subcommand("compare", "compare two JSON run summaries (a = reference)");
  cmp->add_option("a", report_a, "reference summary")->required();
  cmp->add_option("b", report_b, "candidate summary")->required();
  cmp->add_option("--loss-tolerance", tolerance, "max allowed per-epoch loss difference")->capture_default_str();
  cmp->add_option("--out", compare_out, "write the table here instead of stdout");

  std::string gen_dataset = "synth:aifb";
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic graph in the edge-list format");
  gen->add_option("--dataset", gen_dataset, "synth:<preset>[/downscale]")->capture_default_str();
  gen->add_option("--out", gen_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto m = hetflow::parse_model(model);
      if (!m) throw hetflow::ConfigError("model", "unknown model '" + model + "'");
      config.model = *m;
      const auto md = hetflow::parse_mode(mode);
      if (!md) throw hetflow::ConfigError("mode", "unknown mode '" + mode + "'");
      config.mode = *md;
      return do_run(config);
    }
    if (*cmp) return do_compare(report_a, report_b, tolerance, compare_out);
    if (*gen) {
      const auto d = hetflow::load_dataset(gen_dataset);
      hetflow::save_graph(d.graph, gen_out);
      return kExitOk;
    }
  } catch (const hetflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
