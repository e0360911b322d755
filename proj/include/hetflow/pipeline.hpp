// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hetflow/common.hpp"
#include "hetflow/device.hpp"

namespace hetflow {

/// A pipeline role waited longer than the configured stall timeout.
class PipelineStall : public Error {
 public:
  using Error::Error;
};

/// Bounded FIFO that accepts items strictly in sequence order, so several
/// producers can hand off out of order without reordering the stream.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity, std::string name = "queue")
      : capacity_(capacity), name_(std::move(name)) {
    if (capacity_ < 1) throw InvalidArgument("queue capacity must be >= 1");
  }

  /// Blocks until `seq` is the next expected sequence number and a slot is
  /// free. Returns false if the queue was aborted.
  bool push(std::uint64_t seq, T item, Nanos timeout) {
    std::unique_lock lock(mu_);
    const bool ready = cv_.wait_for(lock, timeout, [&] {
      return aborted_ || (seq == next_seq_ && items_.size() < capacity_);
    });
    if (aborted_) return false;
    if (!ready) throw PipelineStall(name_ + ": push of item " + std::to_string(seq) + " stalled");
    items_.push_back(std::move(item));
    ++next_seq_;
    cv_.notify_all();
    return true;
  }

  /// Next item in sequence order; nullopt once closed and drained, or aborted.
  std::optional<T> pop(Nanos timeout) {
    std::unique_lock lock(mu_);
    const bool ready = cv_.wait_for(lock, timeout, [&] { return aborted_ || closed_ || !items_.empty(); });
    if (aborted_) return std::nullopt;
    if (!ready) throw PipelineStall(name_ + ": pop stalled");
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    cv_.notify_all();
    return item;
  }

  /// No more pushes; consumers drain what is left.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  /// Wakes every waiter and makes all further calls fail fast.
  void abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    items_.clear();
    cv_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  const std::size_t capacity_;
  const std::string name_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::uint64_t next_seq_ = 0;
  bool closed_ = false;
  bool aborted_ = false;
};

struct PipelineConfig {
  /// Prepared batches allowed in flight between two roles.
  std::size_t queue_depth = 2;
  int producer_workers = 1;
  bool enable_transfer_stage = true;
  std::chrono::milliseconds stall_timeout{60000};

  void check() const {
    if (queue_depth < 1) throw InvalidArgument("pipeline queue_depth must be >= 1");
    if (producer_workers < 1) throw InvalidArgument("pipeline producer_workers must be >= 1");
    if (stall_timeout.count() <= 0) throw InvalidArgument("pipeline stall_timeout must be > 0");
  }
};

/// Busy time of each role plus end-to-end wall time.
struct StageTimes {
  Nanos wall{0};
  Nanos produce{0};
  Nanos transfer{0};
  Nanos consume{0};
};

/// The three per-item steps of a run. `transfer` may be empty.
template <typename Envelope>
struct StageFunctions {
  std::function<Envelope(std::size_t)> produce;
  std::function<void(std::size_t, Envelope&)> transfer;
  std::function<void(std::size_t, Envelope&)> consume;
};

namespace detail {

template <typename F>
Nanos timed(F&& f) {
  const auto start = Clock::now();
  std::forward<F>(f)();
  return std::chrono::duration_cast<Nanos>(Clock::now() - start);
}

}  // namespace detail

/// produce -> transfer -> consume for each item in order, one at a time.
template <typename Envelope>
StageTimes run_sequential(std::size_t n, const StageFunctions<Envelope>& fns) {
  StageTimes times;
  const auto start = Clock::now();
  for (std::size_t k = 0; k < n; ++k) {
    std::optional<Envelope> e;
    times.produce += detail::timed([&] { e.emplace(fns.produce(k)); });
    if (fns.transfer) times.transfer += detail::timed([&] { fns.transfer(k, *e); });
    times.consume += detail::timed([&] { fns.consume(k, *e); });
  }
  times.wall = std::chrono::duration_cast<Nanos>(Clock::now() - start);
  return times;
}

/// Producer workers, an optional transfer role and the calling thread as the
/// consumer, joined by bounded queues. Items reach the consumer in index
/// order. The first exception thrown by any role stops the pipeline and is
/// rethrown here after all threads have joined.
template <typename Envelope>
StageTimes run_pipelined(std::size_t n, const StageFunctions<Envelope>& fns, const PipelineConfig& config) {
  config.check();
  const Nanos timeout = std::chrono::duration_cast<Nanos>(config.stall_timeout);
  const bool transfer_role = config.enable_transfer_stage && static_cast<bool>(fns.transfer);
  BoundedQueue<Envelope> produced(config.queue_depth, "producer->transfer");
  BoundedQueue<Envelope> ready(config.queue_depth, transfer_role ? "transfer->consumer" : "producer->consumer");
  BoundedQueue<Envelope>& produce_out = transfer_role ? produced : ready;

  std::mutex error_mu;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!error) error = e;
    }
    produced.abort();
    ready.abort();
  };

  std::atomic<std::int64_t> produce_ns{0};
  std::atomic<std::int64_t> transfer_ns{0};
  std::atomic<std::size_t> next{0};
  std::atomic<int> producers_left{config.producer_workers};
  StageTimes times;
  const auto start = Clock::now();

  std::vector<std::thread> threads;
  for (int w = 0; w < config.producer_workers; ++w) {
    threads.emplace_back([&] {
      try {
        for (std::size_t k = next++; k < n; k = next++) {
          std::optional<Envelope> e;
          produce_ns += detail::timed([&] { e.emplace(fns.produce(k)); }).count();
          if (!produce_out.push(k, std::move(*e), timeout)) return;
        }
      } catch (...) {
        fail(std::current_exception());
      }
      if (--producers_left == 0) produce_out.close();
    });
  }
  if (transfer_role) {
    threads.emplace_back([&] {
      try {
        for (std::size_t k = 0; k < n; ++k) {
          auto e = produced.pop(timeout);
          if (!e) return;
          transfer_ns += detail::timed([&] { fns.transfer(k, *e); }).count();
          if (!ready.push(k, std::move(*e), timeout)) return;
        }
        ready.close();
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }

  try {
    for (std::size_t k = 0; k < n; ++k) {
      auto e = ready.pop(timeout);
      if (!e) break;
      if (!transfer_role && fns.transfer) times.transfer += detail::timed([&] { fns.transfer(k, *e); });
      times.consume += detail::timed([&] { fns.consume(k, *e); });
    }
  } catch (...) {
    fail(std::current_exception());
  }
  for (auto& t : threads) t.join();
  times.wall = std::chrono::duration_cast<Nanos>(Clock::now() - start);
  if (error) std::rethrow_exception(error);
  times.produce = Nanos(produce_ns.load());
  times.transfer += Nanos(transfer_ns.load());
  return times;
}

}  // namespace hetflow
