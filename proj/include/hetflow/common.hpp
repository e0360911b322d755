// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hetflow {

using TypeId = std::uint32_t;
using RelationId = std::uint32_t;
using LocalId = std::uint32_t;
using EdgeId = std::uint32_t;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised when a step produces a non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Worker-thread cap from HETFLOW_THREADS; 0 when the variable is unset or invalid.
int thread_cap();

/// Clamps a requested worker count to at least 1 and at most thread_cap() (when set).
int effective_workers(int requested);

/// Hardware concurrency clamped by thread_cap().
int default_workers();

}  // namespace hetflow
