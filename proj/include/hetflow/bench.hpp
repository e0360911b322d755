// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hetflow/executor.hpp"
#include "hetflow/hetgraph.hpp"

namespace hetflow {

/// Invalid run configuration; names the offending field.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string field, const std::string& what)
      : InvalidArgument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A failure while running, tagged with the stage it happened in.
class RunError : public Error {
 public:
  RunError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitMismatch = 3, kExitRuntime = 4 };

struct RunConfig {
  /// `synth:<preset>`, `synth:<preset>/<downscale>` or a graph file path.
  std::string dataset = "synth:aifb";
  ModelKind model = ModelKind::RGCN;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t batch_size = 64;
  /// One value, or one per layer; -1 takes every in-edge.
  std::vector<int> fanout{10};
  Mode mode = Mode::Full;
  int workers = 0;
  std::size_t queue_depth = 2;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  double launch_overhead_us = 5.0;
  bool fp64 = false;
  std::uint32_t num_classes = 4;
  double learning_rate = 0.05;
  std::string out;
  std::string trace_out;

  /// Throws ConfigError.
  void check() const;
  std::vector<int> layer_fanout() const;
};

struct Dataset {
  std::string name;
  HeteroGraph graph;
  TypeId target_type = 0;
  std::size_t labeled = 0;
};

/// Resolves a dataset spec. Throws ConfigError for unknown presets.
Dataset load_dataset(std::string_view spec);

struct RunResult {
  RunConfig config;
  std::string dataset;
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t types = 0;
  std::size_t relations = 0;
  std::vector<EpochReport> epochs;
};

/// Executes the configured epochs. Throws ConfigError or RunError.
RunResult run(const RunConfig& config);

/// CSV columns that carry measured times; everything else is deterministic
/// for a fixed seed in fp64.
const std::vector<std::string>& timing_columns();

std::string format_csv(const RunResult& result);
nlohmann::json summary_json(const RunResult& result);

/// Writes the CSV to config.out (and the summary next to it, extension
/// .json) and the trace to config.trace_out when set.
void write_outputs(const RunResult& result);

struct Comparison {
  double speedup = 1.0;
  double reduction_ratio = 0.0;
  double host_device_a = 0.0;
  double host_device_b = 0.0;
  double loss_divergence = 0.0;
  bool semantic_mismatch = false;
};

/// Compares two JSON summaries of comparable runs (same dataset, model,
/// seed and batching). Throws ConfigError on mismatched configs.
Comparison compare(const nlohmann::json& a, const nlohmann::json& b, double loss_tolerance = 1e-3);
std::string format_comparison(const Comparison& c);

}  // namespace hetflow
