// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "hetflow/device.hpp"
#include "hetflow/hetgraph.hpp"
#include "hetflow/sampler.hpp"

namespace hetflow {

/// Edges of one relation inside one layer block, in batch-local ids.
struct RelationEdges {
  TypeId src_type = 0;
  TypeId dst_type = 0;
  std::vector<LocalId> src_index;
  std::vector<LocalId> dst_index;

  std::size_t size() const noexcept { return src_index.size(); }
  bool empty() const noexcept { return src_index.empty(); }

  bool operator==(const RelationEdges&) const = default;
};

/// One layer's block split into per-relation semantic graphs.
struct SemanticLayer {
  std::vector<RelationEdges> relations;
  std::vector<LocalId> src_count;
  std::vector<LocalId> dst_count;

  std::size_t num_edges() const noexcept;
  std::size_t nonempty_relations() const noexcept;

  bool operator==(const SemanticLayer&) const = default;
};

struct SemanticGraphSet {
  std::vector<SemanticLayer> layers;

  bool operator==(const SemanticGraphSet&) const = default;
};

/// Reference selection: per layer, look up each edge's relation and
/// split the block's columns by relation, preserving column order.
SemanticGraphSet select_edge_indices_serial(const MiniBatch& batch, const HeteroGraph& g);

/// Host-parallel selection; relations are independent tasks handed out
/// dynamically to `workers` threads. Output equals the serial variant.
SemanticGraphSet select_edge_indices_parallel(const MiniBatch& batch, const HeteroGraph& g, int workers);

/// Baseline device selection: per layer one gather kernel for the edge types,
/// then a compare and an index-select kernel for every relation, giving
/// NumLayer * (2R + 1) launches.
SemanticGraphSet select_edge_indices_device(const MiniBatch& batch, const HeteroGraph& g, DeviceQueue& device);

}  // namespace hetflow
