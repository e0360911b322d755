// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "hetflow/common.hpp"

namespace hetflow {

using Nanos = std::chrono::nanoseconds;
using Clock = std::chrono::steady_clock;

enum class Stage : std::uint8_t {
  SemanticBuild,
  FeatureProjection,
  NeighborAggregation,
  SemanticFusion,
  Transfer,
  Other,
};
inline constexpr std::size_t kStageCount = 6;

const char* stage_name(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view name) noexcept;

/// Address range touched by a gather, in the source layout's row space.
struct RowLocality {
  std::uint64_t min_row = 0;
  std::uint64_t max_row = 0;
  std::uint64_t block_begin = 0;
  std::uint64_t block_end = 0;
  std::int64_t block_id = -1;

  bool within_block() const noexcept { return min_row >= block_begin && max_row < block_end; }
};

struct KernelDesc {
  std::string name;
  Stage stage = Stage::Other;
  int layer = -1;
  int relation = -1;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::optional<RowLocality> locality;
};

struct KernelRecord {
  std::uint64_t seq = 0;
  std::string queue;
  std::string name;
  Stage stage = Stage::Other;
  std::int64_t batch = -1;
  int layer = -1;
  int relation = -1;
  Nanos launch_overhead{0};
  Nanos compute_time{0};
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::optional<RowLocality> locality;

  Nanos device_time() const noexcept { return launch_overhead + compute_time; }
};

/// Append-only kernel log with running per-stage aggregates. Safe to append
/// from several queues concurrently.
class KernelTrace {
 public:
  struct Totals {
    std::array<std::size_t, kStageCount> count{};
    std::array<Nanos, kStageCount> device_time{};
    Nanos overhead{0};
    Nanos compute{0};
    std::size_t kernels = 0;

    bool operator==(const Totals&) const = default;
  };

  void append(KernelRecord record);
  std::vector<KernelRecord> records() const;
  Totals totals() const;
  std::size_t size() const;
  void clear();

  /// Recomputes the aggregates from the stored records.
  static Totals recompute(const std::vector<KernelRecord>& records);

 private:
  mutable std::mutex mu_;
  std::vector<KernelRecord> records_;
  Totals totals_;
  std::uint64_t next_seq_ = 0;
};

class DeviceClosed : public Error {
 public:
  using Error::Error;
};

/// Busy-waits for `d`; sleeping cannot resolve microsecond durations.
void spin_for(Nanos d);

/// Emulated device stream. Every submission pays the configured launch
/// overhead (a busy wait), then runs its work synchronously and logs one
/// KernelRecord. Device time accounting is serialized per queue.
class DeviceQueue {
 public:
  DeviceQueue(std::string name, Nanos launch_overhead, std::shared_ptr<KernelTrace> trace);

  DeviceQueue(const DeviceQueue&) = delete;
  DeviceQueue& operator=(const DeviceQueue&) = delete;

  template <typename F>
  std::invoke_result_t<F> submit(const KernelDesc& desc, F&& work) {
    if (!open_.load(std::memory_order_acquire)) {
      throw DeviceClosed("submit '" + desc.name + "' on closed queue " + name_);
    }
    spin_for(launch_overhead_);
    const auto start = Clock::now();
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
      std::forward<F>(work)();
      finish(desc, Clock::now() - start);
    } else {
      auto result = std::forward<F>(work)();
      finish(desc, Clock::now() - start);
      return result;
    }
  }

  void close() noexcept { open_.store(false, std::memory_order_release); }
  bool is_open() const noexcept { return open_.load(std::memory_order_acquire); }

  /// Batch id stamped on subsequent records.
  void set_batch(std::int64_t batch) noexcept { batch_.store(batch, std::memory_order_relaxed); }

  const std::string& name() const noexcept { return name_; }
  Nanos launch_overhead() const noexcept { return launch_overhead_; }
  std::size_t submitted() const noexcept { return submitted_.load(std::memory_order_relaxed); }
  Nanos busy_time() const noexcept { return Nanos(busy_ns_.load(std::memory_order_relaxed)); }
  const std::shared_ptr<KernelTrace>& trace() const noexcept { return trace_; }

 private:
  void finish(const KernelDesc& desc, Clock::duration compute);

  std::string name_;
  Nanos launch_overhead_;
  std::shared_ptr<KernelTrace> trace_;
  std::atomic<bool> open_{true};
  std::atomic<std::int64_t> batch_{-1};
  std::atomic<std::size_t> submitted_{0};
  std::atomic<std::int64_t> busy_ns_{0};
};

}  // namespace hetflow
