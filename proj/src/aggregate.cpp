// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/aggregate.hpp"

#include <string>

namespace hetflow {

const char* reducer_name(Reducer r) noexcept { return r == Reducer::Sum ? "sum" : "mean"; }

std::optional<Reducer> parse_reducer(std::string_view name) noexcept {
  if (name == "sum") return Reducer::Sum;
  if (name == "mean") return Reducer::Mean;
  return std::nullopt;
}

namespace {

void check_segments(std::span<const LocalId> segment, std::size_t segment_count) {
  for (const LocalId s : segment) {
    if (s >= segment_count) {
      throw InvalidArgument("segment id out of range (" + std::to_string(s) + " >= " + std::to_string(segment_count) + ")");
    }
  }
}

template <typename T>
void finalize_mean(Matrix<T>& values, std::span<const std::uint32_t> degrees) {
  for (std::size_t s = 0; s < values.rows(); ++s) {
    if (degrees[s] <= 1) continue;
    const T inv = T(1) / static_cast<T>(degrees[s]);
    for (T& v : values.row(s)) v *= inv;
  }
}

std::vector<std::uint32_t> count_degrees(std::span<const LocalId> segment, std::size_t segment_count) {
  std::vector<std::uint32_t> deg(segment_count, 0);
  for (const LocalId s : segment) ++deg[s];
  return deg;
}

}  // namespace

template <typename T>
AggregationOutput<T> segment_reduce(MatrixRef<T> rows, std::span<const LocalId> segment, std::size_t segment_count,
                                    Reducer reducer, std::span<const T> weights) {
  if (rows.rows != segment.size()) throw InvalidArgument("segment_reduce: row and segment counts differ");
  if (!weights.empty() && weights.size() != segment.size()) throw InvalidArgument("segment_reduce: weight count mismatch");
  check_segments(segment, segment_count);
  AggregationOutput<T> out{Matrix<T>(segment_count, rows.cols), count_degrees(segment, segment_count)};
  for (std::size_t k = 0; k < segment.size(); ++k) {
    const auto src = rows.row(k);
    auto dst = out.values.row(segment[k]);
    const T w = weights.empty() ? T(1) : weights[k];
    for (std::size_t c = 0; c < rows.cols; ++c) dst[c] += w * src[c];
  }
  if (reducer == Reducer::Mean) finalize_mean(out.values, out.degrees);
  return out;
}

template <typename T>
AggregationOutput<T> aggregate_relation(const FeatureView<T>& source, const RelationEdges& rel, LocalId dst_count,
                                        Reducer reducer, DeviceQueue& device, int layer, int relation,
                                        std::span<const T> weights) {
  const std::size_t width = source.width();
  AggregationOutput<T> out{Matrix<T>(dst_count, width), std::vector<std::uint32_t>(dst_count, 0)};
  if (rel.empty()) return out;
  check_segments(rel.dst_index, dst_count);
  const Matrix<T> gathered = gather_rows(source, rel.src_index, device, layer, relation, weights);

  const std::uint64_t bytes = rel.size() * width * sizeof(T);
  KernelDesc scatter{"scatter", Stage::NeighborAggregation, layer, relation,
                     bytes + rel.size() * sizeof(LocalId), dst_count * width * sizeof(T), std::nullopt};
  device.submit(scatter, [&] {
    for (std::size_t k = 0; k < rel.size(); ++k) {
      const LocalId d = rel.dst_index[k];
      ++out.degrees[d];
      const auto src = gathered.row(k);
      auto dst = out.values.row(d);
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
  KernelDesc gather{"gather", Stage::NeighborAggregation, layer, relation,
                    dst_count * (width * sizeof(T) + sizeof(std::uint32_t)), dst_count * width * sizeof(T),
                    std::nullopt};
  device.submit(gather, [&] {
    if (reducer == Reducer::Mean) finalize_mean(out.values, out.degrees);
  });
  return out;
}

template <typename T>
std::vector<AggregationOutput<T>> aggregate_per_relation(const SemanticGraphSet& sgs, std::size_t layer,
                                                         const FeatureStore<T>& fs, Reducer reducer,
                                                         DeviceQueue& device) {
  const auto& sl = sgs.layers.at(layer);
  std::vector<AggregationOutput<T>> out;
  out.reserve(sl.relations.size());
  for (std::size_t r = 0; r < sl.relations.size(); ++r) {
    const auto& rel = sl.relations[r];
    out.push_back(aggregate_relation(fs.view(rel.src_type), rel, sl.dst_count.at(rel.dst_type), reducer, device,
                                     static_cast<int>(layer), static_cast<int>(r)));
  }
  return out;
}

template <typename T>
AggregationOutput<T> aggregate_merged(const MergedAggregationInput<T>& mi, Reducer reducer, DeviceQueue& device,
                                      int layer) {
  const auto& rows = mi.feature_cat;
  if (rows.rows() != mi.dst_index_cat.size()) {
    throw InvalidArgument("aggregate_merged: " + std::to_string(rows.rows()) + " rows but " + std::to_string(mi.dst_index_cat.size()) + " segment ids");
  }
  check_segments(mi.dst_index_cat, mi.segment_count);
  const std::size_t width = rows.cols();
  KernelDesc desc{"segment_reduce", Stage::NeighborAggregation, layer, -1,
                  rows.size() * sizeof(T) + rows.rows() * sizeof(LocalId), mi.segment_count * width * sizeof(T),
                  std::nullopt};
  return device.submit(desc, [&] {
    AggregationOutput<T> out{Matrix<T>(mi.segment_count, width), std::vector<std::uint32_t>(mi.segment_count, 0)};
    for (std::size_t k = 0; k < rows.rows(); ++k) {
      const LocalId d = mi.dst_index_cat[k];
      ++out.degrees[d];
      const auto src = rows.row(k);
      auto dst = out.values.row(d);
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
    if (reducer == Reducer::Mean) finalize_mean(out.values, out.degrees);
    return out;
  });
}

namespace {

// Per-edge gradient: row k = grad_out[segment[k]], divided by the segment's
// degree for mean.
template <typename T>
Matrix<T> expand_grad(MatrixRef<T> grad_out, std::span<const LocalId> segment, Reducer reducer) {
  Matrix<T> g(segment.size(), grad_out.cols);
  std::vector<std::uint32_t> deg;
  if (reducer == Reducer::Mean) deg = count_degrees(segment, grad_out.rows);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    const auto src = grad_out.row(segment[k]);
    auto dst = g.row(k);
    if (reducer == Reducer::Mean) {
      const T inv = T(1) / static_cast<T>(deg[segment[k]]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * inv;
    } else {
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return g;
}

}  // namespace

template <typename T>
Matrix<T> aggregate_backward(MatrixRef<T> grad_out, const MergedAggregationInput<T>& mi, Reducer reducer,
                             DeviceQueue& device, int layer) {
  if (grad_out.rows != mi.segment_count || grad_out.cols != mi.feature_cat.cols()) {
    throw InvalidArgument("aggregate_backward: grad shape " + std::to_string(grad_out.rows) + "x" + std::to_string(grad_out.cols) + " does not match output " + std::to_string(mi.segment_count) + "x" + std::to_string(mi.feature_cat.cols()));
  }
  check_segments(mi.dst_index_cat, mi.segment_count);
  if (mi.dst_index_cat.empty()) return Matrix<T>(0, grad_out.cols);
  const std::uint64_t bytes = mi.dst_index_cat.size() * grad_out.cols * sizeof(T);
  KernelDesc desc{"segment_reduce_backward", Stage::NeighborAggregation, layer, -1,
                  bytes + mi.dst_index_cat.size() * sizeof(LocalId), bytes, std::nullopt};
  return device.submit(desc, [&] { return expand_grad(grad_out, mi.dst_index_cat, reducer); });
}

template <typename T>
Matrix<T> aggregate_relation_backward(MatrixRef<T> grad_out, const RelationEdges& rel, Reducer reducer,
                                      DeviceQueue& device, int layer, int relation) {
  if (rel.empty()) return Matrix<T>(0, grad_out.cols);
  check_segments(rel.dst_index, grad_out.rows);
  const std::uint64_t bytes = rel.size() * grad_out.cols * sizeof(T);
  KernelDesc desc{"gather_backward", Stage::NeighborAggregation, layer, relation,
                  bytes + rel.size() * sizeof(LocalId), bytes, std::nullopt};
  return device.submit(desc, [&] { return expand_grad(grad_out, rel.dst_index, reducer); });
}

template <typename T>
void index_add(MatrixRef<T> grads, std::span<const LocalId> src_index, std::span<const LocalId> row_map,
               std::span<const T> weights, Matrix<T>& target, DeviceQueue& device, int layer, int relation) {
  if (src_index.empty()) return;
  if (grads.rows != src_index.size() || grads.cols != target.cols()) throw InvalidArgument("index_add: shape mismatch");
  if (!weights.empty() && weights.size() != src_index.size()) throw InvalidArgument("index_add: weight count mismatch");
  for (const LocalId s : src_index) {
    const std::size_t row = row_map.empty() ? s : (s < row_map.size() ? row_map[s] : target.rows());
    if (row >= target.rows()) throw InvalidArgument("index_add: source id " + std::to_string(s) + " out of range");
  }
  const std::uint64_t bytes = grads.rows * grads.cols * sizeof(T);
  KernelDesc desc{"index_add", Stage::NeighborAggregation, layer, relation,
                  bytes + src_index.size() * sizeof(LocalId), bytes, std::nullopt};
  device.submit(desc, [&] {
    for (std::size_t k = 0; k < src_index.size(); ++k) {
      const std::size_t row = row_map.empty() ? src_index[k] : row_map[src_index[k]];
      const auto g = grads.row(k);
      auto dst = target.row(row);
      const T w = weights.empty() ? T(1) : weights[k];
      for (std::size_t c = 0; c < g.size(); ++c) dst[c] += w * g[c];
    }
  });
}

template <typename T>
std::vector<Matrix<T>> aggregate_backward(const std::vector<Matrix<T>>& grad_out, const SemanticLayer& layer,
                                          Reducer reducer, DeviceQueue& device, int layer_id) {
  if (grad_out.size() != layer.relations.size()) {
    throw InvalidArgument("aggregate_backward: " + std::to_string(grad_out.size()) + " gradients for " + std::to_string(layer.relations.size()) + " relations");
  }
  std::vector<Matrix<T>> out;
  out.reserve(grad_out.size());
  for (std::size_t r = 0; r < grad_out.size(); ++r) {
    const auto& rel = layer.relations[r];
    const std::size_t width = grad_out[r].cols();
    if (grad_out[r].rows() != layer.dst_count.at(rel.dst_type)) {
      throw InvalidArgument("aggregate_backward: relation " + std::to_string(r) + " gradient has " + std::to_string(grad_out[r].rows()) + " rows, expected " + std::to_string(layer.dst_count.at(rel.dst_type)));
    }
    Matrix<T> src_grad(layer.src_count.at(rel.src_type), width);
    const Matrix<T> edge_grad =
        aggregate_relation_backward<T>(grad_out[r], rel, reducer, device, layer_id, static_cast<int>(r));
    index_add<T>(edge_grad, rel.src_index, {}, {}, src_grad, device, layer_id, static_cast<int>(r));
    out.push_back(std::move(src_grad));
  }
  return out;
}

#define HETFLOW_INSTANTIATE(T)                                                                                      \
  template AggregationOutput<T> segment_reduce(MatrixRef<T>, std::span<const LocalId>, std::size_t, Reducer,        \
                                               std::span<const T>);                                                 \
  template AggregationOutput<T> aggregate_relation(const FeatureView<T>&, const RelationEdges&, LocalId, Reducer,   \
                                                   DeviceQueue&, int, int, std::span<const T>);                     \
  template std::vector<AggregationOutput<T>> aggregate_per_relation(const SemanticGraphSet&, std::size_t,           \
                                                                    const FeatureStore<T>&, Reducer, DeviceQueue&); \
  template AggregationOutput<T> aggregate_merged(const MergedAggregationInput<T>&, Reducer, DeviceQueue&, int);     \
  template Matrix<T> aggregate_backward(MatrixRef<T>, const MergedAggregationInput<T>&, Reducer, DeviceQueue&,      \
                                        int);                                                                       \
  template Matrix<T> aggregate_relation_backward(MatrixRef<T>, const RelationEdges&, Reducer, DeviceQueue&, int,    \
                                                 int);                                                              \
  template void index_add(MatrixRef<T>, std::span<const LocalId>, std::span<const LocalId>, std::span<const T>,     \
                          Matrix<T>&, DeviceQueue&, int, int);                                                      \
  template std::vector<Matrix<T>> aggregate_backward(const std::vector<Matrix<T>>&, const SemanticLayer&, Reducer,  \
                                                     DeviceQueue&, int);

HETFLOW_INSTANTIATE(float)
HETFLOW_INSTANTIATE(double)

#undef HETFLOW_INSTANTIATE

}  // namespace hetflow
