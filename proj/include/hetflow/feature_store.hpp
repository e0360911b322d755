// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "hetflow/device.hpp"
#include "hetflow/hetgraph.hpp"
#include "hetflow/matrix.hpp"
#include "hetflow/sampler.hpp"
#include "hetflow/semantic_build.hpp"

namespace hetflow {

enum class Layout { IndexMajor, TypeMajor };

const char* layout_name(Layout l) noexcept;

/// Rows of one vertex type inside some backing matrix.
///
/// In a type-major store the backing matrix is the type's own block and
/// `rows` is empty (identity). In an index-major store the backing matrix is
/// the interleaved matrix and `rows[local]` names the row of each vertex.
/// Addresses (for locality metadata) are `address_base + backing row`.
template <typename T>
struct FeatureView {
  MatrixRef<T> base;
  std::span<const LocalId> rows;
  LocalId count = 0;
  std::uint64_t address_base = 0;
  std::uint64_t block_begin = 0;
  std::uint64_t block_end = 0;
  std::int64_t block_id = -1;

  bool contiguous() const noexcept { return rows.empty(); }
  std::size_t base_row(LocalId local) const { return rows.empty() ? local : rows[local]; }
  std::span<const T> row(LocalId local) const { return base.row(base_row(local)); }
  std::size_t width() const noexcept { return base.cols; }
};

/// View over every row of a dense matrix, treated as one block.
template <typename T>
FeatureView<T> dense_view(MatrixRef<T> m, std::uint64_t address_base = 0, std::int64_t block_id = 0) {
  FeatureView<T> v;
  v.base = m;
  v.count = static_cast<LocalId>(m.rows);
  v.address_base = address_base;
  v.block_begin = address_base;
  v.block_end = address_base + m.rows;
  v.block_id = block_id;
  return v;
}

/// Vertex features in index-major (interleaved) or type-major layout.
///
/// `permutation()[i]` is the index-major row holding type-major row i, where
/// type-major rows enumerate (type, local) in type order then local order.
/// All types share one row width (the widest type); narrower types are
/// zero-padded.
template <typename T>
class FeatureStore {
 public:
  FeatureStore() = default;

  static FeatureStore type_major(std::vector<Matrix<T>> blocks);
  /// `owner[i]` is the vertex stored in row i; every vertex of every type
  /// must appear exactly once.
  static FeatureStore index_major(Matrix<T> rows, std::span<const SeedVertex> owner,
                                  std::vector<LocalId> type_counts);

  Layout layout() const noexcept { return layout_; }
  std::size_t num_types() const noexcept { return counts_.size(); }
  std::size_t width() const noexcept { return width_; }
  LocalId count(TypeId t) const { return counts_.at(t); }
  std::size_t total_rows() const noexcept { return total_; }
  std::uint64_t type_base(TypeId t) const { return bases_.at(t); }

  std::span<const T> lookup(TypeId t, LocalId local) const;
  FeatureView<T> view(TypeId t) const;

  const Matrix<T>& block(TypeId t) const;
  const Matrix<T>& interleaved() const;
  /// Index-major row of (t, local); identity offsets for type-major stores.
  std::size_t row_of(TypeId t, LocalId local) const;
  std::span<const std::size_t> permutation() const noexcept { return perm_; }

 private:
  template <typename U>
  friend FeatureStore<U> reorganize(const FeatureStore<U>& fs);

  void init_counts(std::vector<LocalId> counts);

  Layout layout_ = Layout::TypeMajor;
  std::vector<LocalId> counts_;
  std::vector<std::uint64_t> bases_;
  std::size_t total_ = 0;
  std::size_t width_ = 0;
  std::vector<Matrix<T>> blocks_;
  Matrix<T> interleaved_;
  std::vector<std::vector<LocalId>> row_map_;
  std::vector<std::size_t> perm_;
};

/// Type-major copy of an index-major store with identical per-vertex rows;
/// keeps the permutation so the original order can be recovered.
template <typename T>
FeatureStore<T> reorganize(const FeatureStore<T>& fs);

/// N(0, 1) features, a pure function of (graph shape, seed). The
/// index-major variant interleaves types in a seeded random order.
template <typename T>
FeatureStore<T> random_features(const HeteroGraph& g, std::uint64_t seed, Layout layout);

/// Flat little-endian float32 file ordered type-major, each type using its
/// own feature_dim.
template <typename T>
FeatureStore<T> load_features(const std::filesystem::path& path, const HeteroGraph& g);
template <typename T>
void save_features(const FeatureStore<T>& fs, const HeteroGraph& g, const std::filesystem::path& path);

/// Host-side feature collection for a block's vertex set; the result keeps
/// the source layout (index-major batches stay interleaved in global order).
template <typename T>
FeatureStore<T> collect_features(const FeatureStore<T>& global, const std::vector<std::vector<LocalId>>& vertex_map);

/// One index-select kernel: row k = weight[k] * view.row(ids[k]). An empty
/// id list returns a 0-row matrix and launches nothing.
template <typename T>
Matrix<T> gather_rows(const FeatureView<T>& view, std::span<const LocalId> ids, DeviceQueue& device,
                      int layer = -1, int relation = -1, std::span<const T> weights = {});

template <typename T>
Matrix<T> gather_features(const FeatureStore<T>& fs, TypeId type, std::span<const LocalId> ids,
                          DeviceQueue& device);

/// Output-row ranges of each destination type inside one merged aggregation.
struct SegmentLayout {
  std::vector<LocalId> base;
  std::vector<LocalId> count;

  static SegmentLayout packed(std::span<const LocalId> counts);
  std::size_t segment_count() const noexcept;
  /// Throws InvalidArgument when ranges overlap or sizes disagree.
  void check(std::size_t num_types) const;
};

template <typename T>
struct MergedAggregationInput {
  Matrix<T> feature_cat;
  std::vector<LocalId> dst_index_cat;
  std::size_t segment_count = 0;
  /// R + 1 entries; relation r owns rows [offsets[r], offsets[r + 1]).
  std::vector<std::size_t> relation_offsets;
  /// Per-row weight already folded into feature_cat; empty when unweighted.
  std::vector<T> edge_weight;
};

/// Per-edge scaling folded into the merged rows.
enum class EdgeNorm {
  None,
  /// 1 / (in-degree of the destination within the relation).
  InverseDegree,
};

/// Gathers every relation's source rows (one kernel each, relation id
/// order), then concatenates rows and destination segment ids (two kernels).
template <typename T>
MergedAggregationInput<T> build_merged_input(const SemanticLayer& layer, std::span<const FeatureView<T>> sources,
                                             const SegmentLayout& segments, DeviceQueue& device,
                                             EdgeNorm norm = EdgeNorm::None,
                                             std::span<const std::vector<T>> weights = {}, int layer_id = -1);

template <typename T>
MergedAggregationInput<T> build_merged_input(const SemanticGraphSet& sgs, std::size_t layer,
                                             const FeatureStore<T>& fs, const SegmentLayout& segments,
                                             DeviceQueue& device);

/// Per-relation source views resolved against a store.
template <typename T>
std::vector<FeatureView<T>> relation_views(const SemanticLayer& layer, const FeatureStore<T>& fs);

/// 1 / in-degree weights for each edge of a relation.
template <typename T>
std::vector<T> inverse_degree_weights(std::span<const LocalId> dst_index, LocalId dst_count);

}  // namespace hetflow
