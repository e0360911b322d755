// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/device.hpp"

#include <string_view>

namespace hetflow {

const char* stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::SemanticBuild: return "semantic_build";
    case Stage::FeatureProjection: return "feature_projection";
    case Stage::NeighborAggregation: return "neighbor_aggregation";
    case Stage::SemanticFusion: return "semantic_fusion";
    case Stage::Transfer: return "transfer";
    case Stage::Other: return "other";
  }
  return "other";
}

std::optional<Stage> parse_stage(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    const auto s = static_cast<Stage>(i);
    if (name == stage_name(s)) return s;
  }
  return std::nullopt;
}

void KernelTrace::append(KernelRecord record) {
  std::lock_guard lock(mu_);
  record.seq = next_seq_++;
  const auto i = static_cast<std::size_t>(record.stage);
  ++totals_.count[i];
  totals_.device_time[i] += record.device_time();
  totals_.overhead += record.launch_overhead;
  totals_.compute += record.compute_time;
  ++totals_.kernels;
  records_.push_back(std::move(record));
}

std::vector<KernelRecord> KernelTrace::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

KernelTrace::Totals KernelTrace::totals() const {
  std::lock_guard lock(mu_);
  return totals_;
}

std::size_t KernelTrace::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

void KernelTrace::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
  totals_ = {};
}

KernelTrace::Totals KernelTrace::recompute(const std::vector<KernelRecord>& records) {
  Totals t;
  for (const auto& r : records) {
    const auto i = static_cast<std::size_t>(r.stage);
    ++t.count[i];
    t.device_time[i] += r.device_time();
    t.overhead += r.launch_overhead;
    t.compute += r.compute_time;
    ++t.kernels;
  }
  return t;
}

void spin_for(Nanos d) {
  if (d <= Nanos::zero()) return;
  const auto until = Clock::now() + d;
  while (Clock::now() < until) {
  }
}

DeviceQueue::DeviceQueue(std::string name, Nanos launch_overhead, std::shared_ptr<KernelTrace> trace)
    : name_(std::move(name)), launch_overhead_(launch_overhead), trace_(std::move(trace)) {
  if (launch_overhead_ < Nanos::zero()) throw InvalidArgument("launch overhead must be >= 0");
  if (!trace_) trace_ = std::make_shared<KernelTrace>();
}

void DeviceQueue::finish(const KernelDesc& desc, Clock::duration compute) {
  KernelRecord rec;
  rec.queue = name_;
  rec.name = desc.name;
  rec.stage = desc.stage;
  rec.batch = batch_.load(std::memory_order_relaxed);
  rec.layer = desc.layer;
  rec.relation = desc.relation;
  rec.launch_overhead = launch_overhead_;
  rec.compute_time = std::chrono::duration_cast<Nanos>(compute);
  rec.bytes_read = desc.bytes_read;
  rec.bytes_written = desc.bytes_written;
  rec.locality = desc.locality;
  submitted_.fetch_add(1, std::memory_order_relaxed);
  busy_ns_.fetch_add(rec.device_time().count(), std::memory_order_relaxed);
  trace_->append(std::move(rec));
}

}  // namespace hetflow
