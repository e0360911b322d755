// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/executor.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "hetflow/semantic_build.hpp"

namespace hetflow {

const char* mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Reorg: return "reorg";
    case Mode::ReorgMerge: return "reorg+merge";
    case Mode::ReorgOffloadParallel: return "reorg+offload+parallel";
    case Mode::Full: return "full";
  }
  return "baseline";
}

std::optional<Mode> parse_mode(std::string_view name) noexcept {
  for (const Mode m : {Mode::Baseline, Mode::Reorg, Mode::ReorgMerge, Mode::ReorgOffloadParallel, Mode::Full}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

const char* selection_name(Selection s) noexcept {
  switch (s) {
    case Selection::Device: return "device";
    case Selection::HostSerial: return "host_serial";
    case Selection::HostParallel: return "host_parallel";
  }
  return "device";
}

ExecutionPlan ExecutionPlan::for_mode(Mode m) noexcept {
  switch (m) {
    case Mode::Baseline:
      return {Layout::IndexMajor, AggregationPath::PerRelation, Selection::Device, false};
    case Mode::Reorg:
      return {Layout::TypeMajor, AggregationPath::PerRelation, Selection::Device, false};
    case Mode::ReorgMerge:
      return {Layout::TypeMajor, AggregationPath::Merged, Selection::Device, false};
    case Mode::ReorgOffloadParallel:
      return {Layout::TypeMajor, AggregationPath::PerRelation, Selection::HostParallel, false};
    case Mode::Full:
      return {Layout::TypeMajor, AggregationPath::Merged, Selection::HostParallel, true};
  }
  return {};
}

void TrainerConfig::check() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("trainer config: " + what);
  };
  require(layers >= 1, "layers must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(num_classes >= 1, "num_classes must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(fanout.empty() || fanout.size() == layers, "fanout needs one entry per layer");
  for (const int f : fanout) require(f >= 1 || f == kAllNeighbors, "fanout entries must be >= 1 or -1 (all)");
  require(workers >= 0, "workers must be >= 0");
  require(launch_overhead >= Nanos::zero(), "launch overhead must be >= 0");
  require(std::isfinite(learning_rate) && learning_rate >= 0, "learning rate must be finite and >= 0");
  pipeline.check();
}

std::size_t BatchReport::kernel_count() const noexcept {
  return std::accumulate(kernels.begin(), kernels.end(), std::size_t{0});
}

double EpochReport::host_device_ratio() const noexcept {
  const auto dev = device + transfer;
  return dev.count() > 0 ? static_cast<double>(host.count()) / static_cast<double>(dev.count()) : 0.0;
}

std::vector<LocalId> labeled_targets(LocalId count, std::size_t labeled, std::uint64_t seed) {
  std::vector<LocalId> ids(count);
  std::iota(ids.begin(), ids.end(), LocalId{0});
  if (labeled >= count) return ids;
  std::mt19937_64 rng(mix_seed(seed, 0x7a76));
  for (std::size_t i = 0; i < labeled; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(labeled);
  std::sort(ids.begin(), ids.end());
  return ids;
}

template <typename T>
Trainer<T>::Trainer(const HeteroGraph& g, FeatureStore<T> features, LabelSet labels, std::vector<LocalId> targets,
                    TrainerConfig config)
    : g_(&g), sampler_(g), labels_(std::move(labels)), targets_(std::move(targets)), config_(std::move(config)) {
  config_.check();
  if (config_.fanout.empty()) config_.fanout.assign(config_.layers, 10);
  if (features.num_types() != g.num_types()) throw InvalidArgument("trainer: feature store does not match graph");
  if (config_.plan.layout == Layout::TypeMajor && features.layout() == Layout::IndexMajor) {
    features_ = reorganize(features);
  } else if (config_.plan.layout == Layout::IndexMajor && features.layout() == Layout::TypeMajor) {
    throw InvalidArgument("trainer: an index-major plan needs an index-major feature store");
  } else {
    features_ = std::move(features);
  }
  if (labels_.type >= g.num_types() || labels_.values.size() != g.vertex_types[labels_.type].count) {
    throw InvalidArgument("trainer: labels do not cover the target type");
  }
  for (const auto v : labels_.values) {
    if (v < 0 || static_cast<std::uint32_t>(v) >= config_.num_classes) {
      throw InvalidArgument("trainer: label " + std::to_string(v) + " outside [0, num_classes)");
    }
  }
  ModelConfig mc;
  mc.kind = config_.model;
  mc.num_layers = config_.layers;
  mc.in_dim = features_.width();
  mc.hidden = config_.hidden;
  mc.num_classes = config_.num_classes;
  mc.num_types = g.num_types();
  mc.num_relations = g.num_relations();
  mc.leaky_slope = config_.leaky_slope;
  state_ = TrainState<T>::create(mc, config_.learning_rate, mix_seed(config_.seed, 0x5eed));
}

template <typename T>
std::size_t Trainer<T>::num_batches() const noexcept {
  return (targets_.size() + config_.batch_size - 1) / config_.batch_size;
}

namespace {

template <typename T>
struct Envelope {
  MiniBatch batch;
  FeatureStore<T> features;
  std::optional<SemanticGraphSet> sgs;
};

template <typename F>
Nanos timed(F&& f) {
  const auto start = Clock::now();
  std::forward<F>(f)();
  return std::chrono::duration_cast<Nanos>(Clock::now() - start);
}

}  // namespace

template <typename T>
EpochReport Trainer<T>::run_epoch(std::size_t epoch) {
  const std::uint64_t epoch_seed = mix_seed(config_.seed, epoch);
  BatchIterator it(sampler_, labels_.type, targets_, config_.batch_size, config_.fanout, epoch_seed, &labels_);
  auto trace = std::make_shared<KernelTrace>();
  DeviceQueue compute("compute", config_.launch_overhead, trace);
  DeviceQueue transfer("transfer", config_.launch_overhead, trace);
  const std::size_t n = it.num_batches();
  const int workers = config_.workers > 0 ? config_.workers : default_workers();
  const ExecutionPlan& plan = config_.plan;

  EpochReport report;
  report.epoch = epoch;
  report.trace = trace;
  report.batches.resize(n);

  StageFunctions<Envelope<T>> fns;
  fns.produce = [&](std::size_t k) {
    Envelope<T> e;
    auto& br = report.batches[k];
    br.index = k;
    br.sample = timed([&] { e.batch = it.batch(k); });
    br.collect = timed([&] { e.features = collect_features(features_, e.batch.layers.front().vertex_map); });
    if (plan.selection == Selection::HostParallel) {
      br.select = timed([&] { e.sgs = select_edge_indices_parallel(e.batch, *g_, workers); });
    } else if (plan.selection == Selection::HostSerial) {
      br.select = timed([&] { e.sgs = select_edge_indices_serial(e.batch, *g_); });
    }
    return e;
  };
  fns.transfer = [&](std::size_t k, Envelope<T>& e) {
    transfer.set_batch(static_cast<std::int64_t>(k));
    const std::uint64_t bytes = e.features.total_rows() * e.features.width() * sizeof(T) +
                                e.batch.num_edges() * (2 * sizeof(LocalId) + sizeof(EdgeId));
    KernelDesc desc{"h2d_copy", Stage::Transfer, -1, -1, bytes, bytes, std::nullopt};
    transfer.submit(desc, [&] {
      FeatureStore<T> on_device = e.features;
      e.features = std::move(on_device);
    });
  };
  fns.consume = [&](std::size_t k, Envelope<T>& e) {
    compute.set_batch(static_cast<std::int64_t>(k));
    if (plan.selection == Selection::Device) e.sgs = select_edge_indices_device(e.batch, *g_, compute);
    ForwardCache<T> cache;
    const Matrix<T> logits = forward(state_.params, e.batch, *e.sgs, e.features, plan.path, compute, &cache);
    auto& br = report.batches[k];
    br.loss = static_cast<double>(backward_and_step<T>(state_, cache, logits, e.batch.labels, compute));
    br.seeds = e.batch.seeds.size();
    br.edges = e.batch.num_edges();
  };

  const StageTimes times = plan.pipelined ? run_pipelined(n, fns, config_.pipeline) : run_sequential(n, fns);
  report.wall = times.wall;

  for (const auto& rec : trace->records()) {
    if (rec.batch < 0 || static_cast<std::size_t>(rec.batch) >= n) continue;
    auto& br = report.batches[static_cast<std::size_t>(rec.batch)];
    ++br.kernels[static_cast<std::size_t>(rec.stage)];
    (rec.queue == transfer.name() ? br.transfer : br.device) += rec.device_time();
  }
  double loss_sum = 0;
  for (const auto& br : report.batches) {
    loss_sum += br.loss;
    report.sample += br.sample;
    report.collect += br.collect;
    report.select += br.select;
    report.device += br.device;
    report.transfer += br.transfer;
  }
  report.host = report.sample + report.collect + report.select;
  report.loss = n > 0 ? loss_sum / static_cast<double>(n) : 0.0;
  report.totals = trace->totals();
  return report;
}

double reduction_ratio(std::size_t base_kernels, std::size_t optimized_kernels) {
  if (base_kernels == 0) return 0.0;
  return 1.0 - static_cast<double>(optimized_kernels) / static_cast<double>(base_kernels);
}

namespace {

TraceReport summarize(std::span<const EpochReport> run) {
  TraceReport r;
  r.epochs = run.size();
  for (const auto& e : run) {
    for (std::size_t s = 0; s < kStageCount; ++s) {
      r.totals.count[s] += e.totals.count[s];
      r.totals.device_time[s] += e.totals.device_time[s];
    }
    r.totals.overhead += e.totals.overhead;
    r.totals.compute += e.totals.compute;
    r.totals.kernels += e.totals.kernels;
    r.host += e.host;
    r.device += e.device + e.transfer;
    r.batches += e.batches.size();
  }
  r.host_device_ratio = r.device.count() > 0 ? static_cast<double>(r.host.count()) / static_cast<double>(r.device.count()) : 0.0;
  return r;
}

}  // namespace

TraceReport trace_report(std::span<const EpochReport> run, std::span<const EpochReport> reference) {
  TraceReport r = summarize(run);
  if (!reference.empty()) {
    if (reference.size() != run.size()) {
      throw InvalidArgument("mismatched epoch boundaries: " + std::to_string(run.size()) + " epochs vs " + std::to_string(reference.size()));
    }
    for (std::size_t i = 0; i < run.size(); ++i) {
      if (run[i].batches.size() != reference[i].batches.size()) {
        throw InvalidArgument("mismatched epoch boundaries: epoch " + std::to_string(i) + " has " + std::to_string(run[i].batches.size()) + " batches vs " + std::to_string(reference[i].batches.size()));
      }
    }
    r.reduction_ratio = reduction_ratio(summarize(reference).totals.kernels, r.totals.kernels);
  }
  return r;
}

void export_trace(std::ostream& out, const std::vector<KernelRecord>& records, std::size_t epoch) {
  for (const auto& rec : records) {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["seq"] = rec.seq;
    j["queue"] = rec.queue;
    j["name"] = rec.name;
    j["stage"] = stage_name(rec.stage);
    j["batch"] = rec.batch;
    j["layer"] = rec.layer;
    j["relation"] = rec.relation;
    j["overhead_ns"] = rec.launch_overhead.count();
    j["compute_ns"] = rec.compute_time.count();
    j["bytes"] = rec.bytes_read + rec.bytes_written;
    j["bytes_read"] = rec.bytes_read;
    j["bytes_written"] = rec.bytes_written;
    if (rec.locality) {
      j["locality"] = {{"min_row", rec.locality->min_row},         {"max_row", rec.locality->max_row},
                       {"block_begin", rec.locality->block_begin}, {"block_end", rec.locality->block_end},
                       {"block_id", rec.locality->block_id}};
    }
    out << j.dump() << '\n';
  }
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace hetflow
