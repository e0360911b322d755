// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hetflow/device.hpp"
#include "hetflow/feature_store.hpp"
#include "hetflow/hetgraph.hpp"
#include "hetflow/model.hpp"
#include "hetflow/pipeline.hpp"
#include "hetflow/sampler.hpp"

namespace hetflow {

enum class Selection { Device, HostSerial, HostParallel };

/// The five ablation configurations.
enum class Mode { Baseline, Reorg, ReorgMerge, ReorgOffloadParallel, Full };

const char* mode_name(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view name) noexcept;
const char* selection_name(Selection s) noexcept;

struct ExecutionPlan {
  Layout layout = Layout::IndexMajor;
  AggregationPath path = AggregationPath::PerRelation;
  Selection selection = Selection::Device;
  bool pipelined = false;

  static ExecutionPlan for_mode(Mode m) noexcept;

  bool operator==(const ExecutionPlan&) const = default;
};

struct TrainerConfig {
  ModelKind model = ModelKind::RGCN;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::uint32_t num_classes = 4;
  std::size_t batch_size = 64;
  /// Per layer, outermost first; empty means 10 for every layer.
  std::vector<int> fanout;
  ExecutionPlan plan;
  /// Host selection workers; 0 means default_workers().
  int workers = 0;
  PipelineConfig pipeline;
  Nanos launch_overhead{5000};
  double learning_rate = 0.05;
  double leaky_slope = 0.2;
  std::uint64_t seed = 1;

  void check() const;
};

struct BatchReport {
  std::size_t index = 0;
  std::size_t seeds = 0;
  std::size_t edges = 0;
  double loss = 0;
  Nanos sample{0};
  Nanos collect{0};
  Nanos select{0};
  Nanos transfer{0};
  Nanos device{0};
  std::array<std::size_t, kStageCount> kernels{};

  Nanos host() const noexcept { return sample + collect + select; }
  std::size_t kernel_count() const noexcept;
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0;
  Nanos wall{0};
  /// Host busy time: sampling, feature collection and host-side selection.
  Nanos host{0};
  Nanos sample{0};
  Nanos collect{0};
  Nanos select{0};
  /// Emulated device busy time of the compute queue.
  Nanos device{0};
  /// Emulated device busy time of the transfer queue.
  Nanos transfer{0};
  KernelTrace::Totals totals;
  std::vector<BatchReport> batches;
  std::shared_ptr<KernelTrace> trace;

  double host_device_ratio() const noexcept;
};

/// Distinct vertices of a type to use as training targets: a seeded sample
/// of `labeled` ids (all of them when labeled >= count), sorted.
std::vector<LocalId> labeled_targets(LocalId count, std::size_t labeled, std::uint64_t seed);

/// Mini-batch training loop. Owns the global features (reorganized once at
/// construction when the plan is type-major) and the training state.
template <typename T>
class Trainer {
 public:
  Trainer(const HeteroGraph& g, FeatureStore<T> features, LabelSet labels, std::vector<LocalId> targets,
          TrainerConfig config);

  /// One pass over the targets. Batch order and sampling depend only on
  /// (seed, epoch, batch index).
  EpochReport run_epoch(std::size_t epoch);

  const TrainState<T>& state() const noexcept { return state_; }
  TrainState<T>& state() noexcept { return state_; }
  const FeatureStore<T>& features() const noexcept { return features_; }
  const TrainerConfig& config() const noexcept { return config_; }
  std::size_t num_batches() const noexcept;

 private:
  const HeteroGraph* g_;
  NeighborSampler sampler_;
  FeatureStore<T> features_;
  LabelSet labels_;
  std::vector<LocalId> targets_;
  TrainerConfig config_;
  TrainState<T> state_;
};

/// Aggregates of one or more epochs of kernel records.
struct TraceReport {
  KernelTrace::Totals totals;
  Nanos host{0};
  Nanos device{0};
  std::size_t epochs = 0;
  std::size_t batches = 0;
  double host_device_ratio = 0;
  /// 1 - kernels / reference kernels, when a reference was given.
  std::optional<double> reduction_ratio;
};

/// 1 - optimized / base.
double reduction_ratio(std::size_t base_kernels, std::size_t optimized_kernels);

/// Summarizes a run, optionally against a reference run. Throws
/// InvalidArgument on mismatched epoch boundaries (different epoch or batch
/// counts).
TraceReport trace_report(std::span<const EpochReport> run, std::span<const EpochReport> reference = {});

/// One JSON object per kernel record.
void export_trace(std::ostream& out, const std::vector<KernelRecord>& records, std::size_t epoch);

}  // namespace hetflow
