// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/common.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace hetflow {

int thread_cap() {
  const char* env = std::getenv("HETFLOW_THREADS");
  if (env == nullptr) return 0;
  int v = 0;
  auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
  if (ec != std::errc{} || v <= 0) return 0;
  return v;
}

int effective_workers(int requested) {
  int w = std::max(requested, 1);
  if (const int cap = thread_cap(); cap > 0) w = std::min(w, cap);
  return w;
}

int default_workers() {
  return effective_workers(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
}

}  // namespace hetflow
