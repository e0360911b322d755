// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hetflow/device.hpp"
#include "hetflow/feature_store.hpp"
#include "hetflow/matrix.hpp"
#include "hetflow/semantic_build.hpp"

namespace hetflow {

enum class Reducer { Sum, Mean };

const char* reducer_name(Reducer r) noexcept;
std::optional<Reducer> parse_reducer(std::string_view name) noexcept;

template <typename T>
struct AggregationOutput {
  Matrix<T> values;
  std::vector<std::uint32_t> degrees;
};

/// Host reference for one segment reduction (no kernels). Row k of `rows`
/// (scaled by weights[k] when given) goes to segment `segment[k]`.
template <typename T>
AggregationOutput<T> segment_reduce(MatrixRef<T> rows, std::span<const LocalId> segment, std::size_t segment_count,
                                    Reducer reducer, std::span<const T> weights = {});

/// Baseline aggregation of one relation: an index-select of the source rows,
/// a scatter into destination rows and a gather that finalizes the result.
/// Empty relations produce zero rows without launching anything.
template <typename T>
AggregationOutput<T> aggregate_relation(const FeatureView<T>& source, const RelationEdges& rel, LocalId dst_count,
                                        Reducer reducer, DeviceQueue& device, int layer = -1, int relation = -1,
                                        std::span<const T> weights = {});

/// One output per relation, each sized to its destination type's count in
/// the layer.
template <typename T>
std::vector<AggregationOutput<T>> aggregate_per_relation(const SemanticGraphSet& sgs, std::size_t layer,
                                                         const FeatureStore<T>& fs, Reducer reducer,
                                                         DeviceQueue& device);

/// Single segment-reduction kernel over the merged rows. Edge weights are
/// already folded into `feature_cat`; degrees count rows per segment.
template <typename T>
AggregationOutput<T> aggregate_merged(const MergedAggregationInput<T>& mi, Reducer reducer, DeviceQueue& device,
                                      int layer = -1);

/// Gradient with respect to each row of `feature_cat` (one kernel).
template <typename T>
Matrix<T> aggregate_backward(MatrixRef<T> grad_out, const MergedAggregationInput<T>& mi, Reducer reducer,
                             DeviceQueue& device, int layer = -1);

/// Gradient with respect to each gathered row of one relation (one kernel).
template <typename T>
Matrix<T> aggregate_relation_backward(MatrixRef<T> grad_out, const RelationEdges& rel, Reducer reducer,
                                      DeviceQueue& device, int layer = -1, int relation = -1);

/// target[base_row(src[k])] += weights[k] * grads[k] (one kernel). `target`
/// is laid out like the view's backing matrix.
template <typename T>
void index_add(MatrixRef<T> grads, std::span<const LocalId> src_index, std::span<const LocalId> row_map,
               std::span<const T> weights, Matrix<T>& target, DeviceQueue& device, int layer = -1,
               int relation = -1);

/// Per-relation gradients with respect to the source-type feature rows of
/// the layer (`layer.src_count[src_type]` rows each).
template <typename T>
std::vector<Matrix<T>> aggregate_backward(const std::vector<Matrix<T>>& grad_out, const SemanticLayer& layer,
                                          Reducer reducer, DeviceQueue& device, int layer_id = -1);

}  // namespace hetflow
