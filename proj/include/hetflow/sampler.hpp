// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hetflow/hetgraph.hpp"

namespace hetflow {

struct SeedVertex {
  TypeId type = 0;
  LocalId local = 0;

  bool operator==(const SeedVertex&) const = default;
};

/// Sampled message-flow block for one GNN layer.
///
/// `vertex_map[t]` lists the graph-local ids of the block's source vertices of
/// type t in batch-local order; the first `dst_count[t]` of them are the
/// block's destination vertices. Edge k runs from batch-local `src[k]` (of
/// its relation's src type) to batch-local `dst[k]` (of its dst type).
struct LayerBlock {
  std::vector<LocalId> src;
  std::vector<LocalId> dst;
  std::vector<EdgeId> edge_id;
  std::vector<std::vector<LocalId>> vertex_map;
  std::vector<LocalId> dst_count;

  std::size_t num_edges() const noexcept { return edge_id.size(); }
  std::vector<LocalId> src_count() const;

  bool operator==(const LayerBlock&) const = default;
};

/// Multi-layer sampled subgraph. `layers` is ordered outermost first; the
/// destination set of layers[l] is the source set of layers[l + 1], and the
/// innermost destination set holds the seeds.
struct MiniBatch {
  std::uint64_t index = 0;
  std::vector<SeedVertex> seeds;
  /// Batch-local row of each seed within its type in the innermost dst set.
  std::vector<LocalId> seed_position;
  std::vector<LayerBlock> layers;
  std::vector<std::int32_t> labels;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t num_edges() const noexcept;

  bool operator==(const MiniBatch&) const = default;
};

/// Per-layer fanout value meaning "take every in-edge".
inline constexpr int kAllNeighbors = -1;

/// Class labels for the vertices of one type.
struct LabelSet {
  TypeId type = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::int32_t> values;
};

/// Uniform neighbor sampler over per-relation in-edge (CSC) indices.
class NeighborSampler {
 public:
  explicit NeighborSampler(const HeteroGraph& g);

  const HeteroGraph& graph() const noexcept { return *g_; }

  /// Samples at most fanout[l] in-edges per (vertex, relation) for every
  /// layer, without replacement. `fanout` is ordered outermost layer first.
  MiniBatch sample(std::span<const SeedVertex> seeds, std::span<const int> fanout,
                   std::uint64_t seed, const LabelSet* labels = nullptr) const;

  /// In-edges of `v` under relation r, as relation-local edge positions.
  std::span<const EdgeId> in_edges(RelationId r, LocalId v) const;

 private:
  const HeteroGraph* g_;
  std::vector<std::vector<EdgeId>> in_offsets_;
  std::vector<std::vector<EdgeId>> in_edges_;
  std::vector<std::vector<RelationId>> relations_into_;
};

/// Seed stream for one epoch seed; derived from (epoch seed, batch index).
std::uint64_t batch_seed(std::uint64_t epoch_seed, std::uint64_t batch_index);

/// Splits the target vertices into shuffled mini-batches for one epoch.
/// Batches can be materialized in any order; each one's sampling stream
/// depends only on (epoch seed, batch index).
class BatchIterator {
 public:
  BatchIterator(const NeighborSampler& sampler, TypeId target_type, std::size_t batch_size,
                std::vector<int> fanout, std::uint64_t epoch_seed, const LabelSet* labels = nullptr);
  BatchIterator(const NeighborSampler& sampler, TypeId target_type, std::vector<LocalId> targets,
                std::size_t batch_size, std::vector<int> fanout, std::uint64_t epoch_seed,
                const LabelSet* labels = nullptr);

  std::size_t num_batches() const noexcept;
  std::vector<SeedVertex> seeds(std::size_t batch) const;
  MiniBatch batch(std::size_t batch) const;
  std::optional<MiniBatch> next();

 private:
  const NeighborSampler* sampler_;
  TypeId target_type_;
  std::vector<LocalId> order_;
  std::size_t batch_size_;
  std::vector<int> fanout_;
  std::uint64_t epoch_seed_;
  const LabelSet* labels_;
  std::size_t cursor_ = 0;
};

}  // namespace hetflow
