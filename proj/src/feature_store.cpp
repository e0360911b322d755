// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <tuple>

namespace hetflow {

const char* layout_name(Layout l) noexcept {
  return l == Layout::IndexMajor ? "index_major" : "type_major";
}

template <typename T>
void FeatureStore<T>::init_counts(std::vector<LocalId> counts) {
  counts_ = std::move(counts);
  bases_.assign(counts_.size(), 0);
  total_ = 0;
  for (std::size_t t = 0; t < counts_.size(); ++t) {
    bases_[t] = total_;
    total_ += counts_[t];
  }
}

template <typename T>
FeatureStore<T> FeatureStore<T>::type_major(std::vector<Matrix<T>> blocks) {
  FeatureStore fs;
  fs.layout_ = Layout::TypeMajor;
  std::vector<LocalId> counts(blocks.size());
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    counts[t] = static_cast<LocalId>(blocks[t].rows());
    if (t > 0 && blocks[t].cols() != blocks[0].cols()) {
      throw InvalidArgument("type_major: block " + std::to_string(t) + " has width " + std::to_string(blocks[t].cols()) + ", expected " + std::to_string(blocks[0].cols()));
    }
  }
  fs.width_ = blocks.empty() ? 0 : blocks[0].cols();
  fs.init_counts(std::move(counts));
  fs.blocks_ = std::move(blocks);
  fs.perm_.resize(fs.total_);
  std::iota(fs.perm_.begin(), fs.perm_.end(), std::size_t{0});
  return fs;
}

template <typename T>
FeatureStore<T> FeatureStore<T>::index_major(Matrix<T> rows, std::span<const SeedVertex> owner,
                                             std::vector<LocalId> type_counts) {
  FeatureStore fs;
  fs.layout_ = Layout::IndexMajor;
  fs.width_ = rows.cols();
  fs.init_counts(std::move(type_counts));
  if (owner.size() != rows.rows() || rows.rows() != fs.total_) {
    throw InvalidArgument("index_major: " + std::to_string(rows.rows()) + " rows, " + std::to_string(owner.size()) + " owners, " + std::to_string(fs.total_) + " vertices");
  }
  constexpr LocalId kUnset = std::numeric_limits<LocalId>::max();
  fs.row_map_.resize(fs.counts_.size());
  for (std::size_t t = 0; t < fs.counts_.size(); ++t) fs.row_map_[t].assign(fs.counts_[t], kUnset);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    const auto [t, local] = owner[i];
    if (t >= fs.counts_.size() || local >= fs.counts_[t]) {
      throw InvalidArgument("index_major: row " + std::to_string(i) + " owner out of range");
    }
    if (fs.row_map_[t][local] != kUnset) {
      throw InvalidArgument("index_major: vertex (" + std::to_string(t) + "," + std::to_string(local) + ") stored twice");
    }
    fs.row_map_[t][local] = static_cast<LocalId>(i);
  }
  fs.perm_.resize(fs.total_);
  for (std::size_t t = 0; t < fs.counts_.size(); ++t) {
    for (LocalId l = 0; l < fs.counts_[t]; ++l) fs.perm_[fs.bases_[t] + l] = fs.row_map_[t][l];
  }
  fs.interleaved_ = std::move(rows);
  return fs;
}

template <typename T>
std::span<const T> FeatureStore<T>::lookup(TypeId t, LocalId local) const {
  if (t >= counts_.size() || local >= counts_[t]) {
    throw InvalidArgument("feature lookup (" + std::to_string(t) + "," + std::to_string(local) + ") out of range");
  }
  return layout_ == Layout::TypeMajor ? blocks_[t].row(local) : interleaved_.row(row_map_[t][local]);
}

template <typename T>
FeatureView<T> FeatureStore<T>::view(TypeId t) const {
  if (t >= counts_.size()) throw InvalidArgument("feature view: type " + std::to_string(t) + " out of range");
  FeatureView<T> v;
  v.count = counts_[t];
  if (layout_ == Layout::TypeMajor) {
    v.base = blocks_[t].ref();
    v.address_base = bases_[t];
    v.block_begin = bases_[t];
    v.block_end = bases_[t] + counts_[t];
    v.block_id = t;
  } else {
    v.base = interleaved_.ref();
    v.rows = row_map_[t];
    v.block_begin = 0;
    v.block_end = total_;
  }
  return v;
}

template <typename T>
const Matrix<T>& FeatureStore<T>::block(TypeId t) const {
  if (layout_ != Layout::TypeMajor) throw InvalidArgument("block() requires a type-major store");
  return blocks_.at(t);
}

template <typename T>
const Matrix<T>& FeatureStore<T>::interleaved() const {
  if (layout_ != Layout::IndexMajor) throw InvalidArgument("interleaved() requires an index-major store");
  return interleaved_;
}

template <typename T>
std::size_t FeatureStore<T>::row_of(TypeId t, LocalId local) const {
  if (t >= counts_.size() || local >= counts_[t]) throw InvalidArgument("row_of: vertex out of range");
  return layout_ == Layout::TypeMajor ? bases_[t] + local : row_map_[t][local];
}

template <typename T>
FeatureStore<T> reorganize(const FeatureStore<T>& fs) {
  if (fs.layout() != Layout::IndexMajor) throw InvalidArgument("reorganize: store is already type-major");
  std::vector<Matrix<T>> blocks(fs.num_types());
  for (TypeId t = 0; t < fs.num_types(); ++t) {
    Matrix<T> b(fs.count(t), fs.width());
    for (LocalId l = 0; l < fs.count(t); ++l) {
      const auto src = fs.interleaved_.row(fs.row_map_[t][l]);
      std::copy(src.begin(), src.end(), b.row(l).begin());
    }
    blocks[t] = std::move(b);
  }
  FeatureStore<T> out = FeatureStore<T>::type_major(std::move(blocks));
  out.perm_ = fs.perm_;
  return out;
}

template <typename T>
FeatureStore<T> random_features(const HeteroGraph& g, std::uint64_t seed, Layout layout) {
  const std::size_t width = g.max_feature_dim();
  std::vector<Matrix<T>> blocks(g.num_types());
  for (TypeId t = 0; t < g.num_types(); ++t) {
    const auto& vt = g.vertex_types[t];
    Matrix<T> b(vt.count, width);
    std::mt19937_64 rng(mix_seed(seed, t));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (LocalId l = 0; l < vt.count; ++l) {
      auto row = b.row(l);
      for (std::size_t c = 0; c < vt.feature_dim; ++c) row[c] = static_cast<T>(normal(rng));
    }
    blocks[t] = std::move(b);
  }
  if (layout == Layout::TypeMajor) return FeatureStore<T>::type_major(std::move(blocks));

  std::vector<SeedVertex> owner;
  owner.reserve(g.num_vertices());
  std::vector<LocalId> counts(g.num_types());
  for (TypeId t = 0; t < g.num_types(); ++t) {
    counts[t] = g.vertex_types[t].count;
    for (LocalId l = 0; l < counts[t]; ++l) owner.push_back({t, l});
  }
  std::mt19937_64 rng(mix_seed(seed, 0x1d));
  std::shuffle(owner.begin(), owner.end(), rng);
  Matrix<T> rows(owner.size(), width);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    const auto src = blocks[owner[i].type].row(owner[i].local);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  return FeatureStore<T>::index_major(std::move(rows), owner, std::move(counts));
}

namespace {

float to_little_endian(float v) {
  if constexpr (std::endian::native == std::endian::big) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    return std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
  }
  return v;
}

}  // namespace

template <typename T>
FeatureStore<T> load_features(const std::filesystem::path& path, const HeteroGraph& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file " + path.string());
  std::uint64_t expected = 0;
  for (const auto& vt : g.vertex_types) expected += static_cast<std::uint64_t>(vt.count) * vt.feature_dim;
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected * sizeof(float)) {
    throw Error("feature file " + path.string() + " has " + std::to_string(bytes) + " bytes, expected " + std::to_string(expected * sizeof(float)));
  }
  const std::size_t width = g.max_feature_dim();
  std::vector<Matrix<T>> blocks(g.num_types());
  std::vector<float> buf;
  for (TypeId t = 0; t < g.num_types(); ++t) {
    const auto& vt = g.vertex_types[t];
    buf.resize(static_cast<std::size_t>(vt.count) * vt.feature_dim);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    Matrix<T> b(vt.count, width);
    for (LocalId l = 0; l < vt.count; ++l) {
      for (std::size_t c = 0; c < vt.feature_dim; ++c) {
        b(l, c) = static_cast<T>(to_little_endian(buf[static_cast<std::size_t>(l) * vt.feature_dim + c]));
      }
    }
    blocks[t] = std::move(b);
  }
  return FeatureStore<T>::type_major(std::move(blocks));
}

template <typename T>
void save_features(const FeatureStore<T>& fs, const HeteroGraph& g, const std::filesystem::path& path) {
  if (fs.num_types() != g.num_types()) throw InvalidArgument("save_features: store does not match graph");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file " + path.string());
  for (TypeId t = 0; t < g.num_types(); ++t) {
    const auto& vt = g.vertex_types[t];
    for (LocalId l = 0; l < vt.count; ++l) {
      const auto row = fs.lookup(t, l);
      for (std::size_t c = 0; c < vt.feature_dim; ++c) {
        const float v = to_little_endian(static_cast<float>(row[c]));
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
}

template <typename T>
FeatureStore<T> collect_features(const FeatureStore<T>& global, const std::vector<std::vector<LocalId>>& vertex_map) {
  if (vertex_map.size() != global.num_types()) {
    throw InvalidArgument("collect_features: vertex map has " + std::to_string(vertex_map.size()) + " types, store has " + std::to_string(global.num_types()));
  }
  const std::size_t width = global.width();
  std::vector<LocalId> counts(vertex_map.size());
  for (std::size_t t = 0; t < vertex_map.size(); ++t) counts[t] = static_cast<LocalId>(vertex_map[t].size());

  if (global.layout() == Layout::TypeMajor) {
    std::vector<Matrix<T>> blocks(vertex_map.size());
    for (TypeId t = 0; t < vertex_map.size(); ++t) {
      Matrix<T> b(vertex_map[t].size(), width);
      for (std::size_t i = 0; i < vertex_map[t].size(); ++i) {
        const auto src = global.lookup(t, vertex_map[t][i]);
        std::copy(src.begin(), src.end(), b.row(i).begin());
      }
      blocks[t] = std::move(b);
    }
    return FeatureStore<T>::type_major(std::move(blocks));
  }

  std::vector<std::tuple<std::size_t, TypeId, LocalId>> order;
  for (TypeId t = 0; t < vertex_map.size(); ++t) {
    for (std::size_t i = 0; i < vertex_map[t].size(); ++i) {
      order.emplace_back(global.row_of(t, vertex_map[t][i]), t, static_cast<LocalId>(i));
    }
  }
  std::sort(order.begin(), order.end());
  Matrix<T> rows(order.size(), width);
  std::vector<SeedVertex> owner(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto [global_row, t, local] = order[i];
    const auto src = global.interleaved().row(global_row);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
    owner[i] = {t, local};
  }
  return FeatureStore<T>::index_major(std::move(rows), owner, std::move(counts));
}

namespace {

template <typename T>
void check_ids(const FeatureView<T>& view, std::span<const LocalId> ids) {
  for (const LocalId id : ids) {
    if (id >= view.count) {
      throw InvalidArgument("gather: id out of range (" + std::to_string(id) + " >= " + std::to_string(view.count) + ")");
    }
  }
}

template <typename T>
RowLocality locality_of(const FeatureView<T>& view, std::span<const LocalId> ids) {
  RowLocality loc;
  loc.min_row = std::numeric_limits<std::uint64_t>::max();
  for (const LocalId id : ids) {
    const std::uint64_t a = view.address_base + view.base_row(id);
    loc.min_row = std::min(loc.min_row, a);
    loc.max_row = std::max(loc.max_row, a);
  }
  loc.block_begin = view.block_begin;
  loc.block_end = view.block_end;
  loc.block_id = view.block_id;
  return loc;
}

template <typename T>
void copy_rows(const FeatureView<T>& view, std::span<const LocalId> ids, std::span<const T> weights, T* out) {
  const std::size_t w = view.width();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto src = view.row(ids[k]);
    T* dst = out + k * w;
    if (weights.empty()) {
      std::copy(src.begin(), src.end(), dst);
    } else {
      const T s = weights[k];
      for (std::size_t c = 0; c < w; ++c) dst[c] = s * src[c];
    }
  }
}

}  // namespace

template <typename T>
Matrix<T> gather_rows(const FeatureView<T>& view, std::span<const LocalId> ids, DeviceQueue& device,
                      int layer, int relation, std::span<const T> weights) {
  if (ids.empty()) return Matrix<T>(0, view.width());
  check_ids(view, ids);
  if (!weights.empty() && weights.size() != ids.size()) throw InvalidArgument("gather: weight count mismatch");
  const std::uint64_t bytes = ids.size() * view.width() * sizeof(T);
  KernelDesc desc{"index_select", Stage::NeighborAggregation, layer, relation,
                  bytes + ids.size() * sizeof(LocalId), bytes, locality_of(view, ids)};
  return device.submit(desc, [&] {
    Matrix<T> out(ids.size(), view.width());
    copy_rows(view, ids, weights, out.data());
    return out;
  });
}

template <typename T>
Matrix<T> gather_features(const FeatureStore<T>& fs, TypeId type, std::span<const LocalId> ids, DeviceQueue& device) {
  return gather_rows(fs.view(type), ids, device);
}

SegmentLayout SegmentLayout::packed(std::span<const LocalId> counts) {
  SegmentLayout s;
  s.count.assign(counts.begin(), counts.end());
  s.base.resize(counts.size());
  LocalId acc = 0;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    s.base[t] = acc;
    acc += counts[t];
  }
  return s;
}

std::size_t SegmentLayout::segment_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t t = 0; t < base.size() && t < count.size(); ++t) {
    n = std::max<std::size_t>(n, static_cast<std::size_t>(base[t]) + count[t]);
  }
  return n;
}

void SegmentLayout::check(std::size_t num_types) const {
  if (base.size() != num_types || count.size() != num_types) {
    throw InvalidArgument("inconsistent segment bases: expected " + std::to_string(num_types) + " types, got " + std::to_string(base.size()) + " bases and " + std::to_string(count.size()) + " counts");
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (std::size_t t = 0; t < num_types; ++t) {
    if (count[t] > 0) ranges.emplace_back(base[t], static_cast<std::uint64_t>(base[t]) + count[t]);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) {
      throw InvalidArgument("inconsistent segment bases: ranges [" + std::to_string(ranges[i - 1].first) + "," + std::to_string(ranges[i - 1].second) + ") and [" + std::to_string(ranges[i].first) + "," + std::to_string(ranges[i].second) + ") overlap");
    }
  }
}

template <typename T>
std::vector<T> inverse_degree_weights(std::span<const LocalId> dst_index, LocalId dst_count) {
  std::vector<std::uint32_t> degree(dst_count, 0);
  for (const LocalId d : dst_index) ++degree[d];
  std::vector<T> w(dst_index.size());
  for (std::size_t k = 0; k < dst_index.size(); ++k) w[k] = T(1) / static_cast<T>(degree[dst_index[k]]);
  return w;
}

template <typename T>
MergedAggregationInput<T> build_merged_input(const SemanticLayer& layer, std::span<const FeatureView<T>> sources,
                                             const SegmentLayout& segments, DeviceQueue& device, EdgeNorm norm,
                                             std::span<const std::vector<T>> weights, int layer_id) {
  const std::size_t num_relations = layer.relations.size();
  segments.check(layer.dst_count.size());
  if (sources.size() != num_relations) {
    throw InvalidArgument("build_merged_input: " + std::to_string(sources.size()) + " sources for " + std::to_string(num_relations) + " relations");
  }
  if (!weights.empty() && weights.size() != num_relations) {
    throw InvalidArgument("build_merged_input: weights must cover every relation");
  }
  const bool weighted = !weights.empty() || norm == EdgeNorm::InverseDegree;

  MergedAggregationInput<T> mi;
  mi.segment_count = segments.segment_count();
  mi.relation_offsets.assign(num_relations + 1, 0);
  std::size_t width = 0;
  for (std::size_t r = 0; r < num_relations; ++r) {
    if (!layer.relations[r].empty()) width = std::max(width, sources[r].width());
  }
  // all relations empty: keep the source width so the output shape holds
  if (width == 0) {
    for (const auto& s : sources) width = std::max(width, s.width());
  }

  std::vector<Matrix<T>> features(num_relations);
  std::vector<std::vector<LocalId>> segment_ids(num_relations);
  std::vector<std::vector<T>> row_weights(num_relations);
  std::size_t total = 0;
  for (std::size_t r = 0; r < num_relations; ++r) {
    const auto& rel = layer.relations[r];
    mi.relation_offsets[r] = total;
    if (rel.empty()) continue;
    const auto& src = sources[r];
    if (src.width() != width) throw InvalidArgument("build_merged_input: relation sources differ in width");
    check_ids(src, rel.src_index);
    const LocalId seg_count = segments.count.at(rel.dst_type);
    for (const LocalId d : rel.dst_index) {
      if (d >= seg_count) {
        throw InvalidArgument("inconsistent segment bases: relation " + std::to_string(r) + " dst id " + std::to_string(d) + " >= segment count " + std::to_string(seg_count) + " of type " + std::to_string(rel.dst_type));
      }
    }
    if (!weights.empty() && weights[r].size() != rel.size()) {
      throw InvalidArgument("build_merged_input: relation " + std::to_string(r) + " weight count mismatch");
    }
    const std::uint64_t bytes = rel.size() * width * sizeof(T);
    KernelDesc desc{"index_select", Stage::NeighborAggregation, layer_id, static_cast<int>(r),
                    bytes + 2 * rel.size() * sizeof(LocalId), bytes + rel.size() * sizeof(LocalId),
                    locality_of(src, rel.src_index)};
    device.submit(desc, [&] {
      if (!weights.empty()) {
        row_weights[r] = weights[r];
      } else if (norm == EdgeNorm::InverseDegree) {
        row_weights[r] = inverse_degree_weights<T>(rel.dst_index, seg_count);
      }
      Matrix<T> f(rel.size(), width);
      copy_rows<T>(src, rel.src_index, row_weights[r], f.data());
      features[r] = std::move(f);
      auto& seg = segment_ids[r];
      seg.resize(rel.size());
      const LocalId base = segments.base[rel.dst_type];
      for (std::size_t k = 0; k < rel.size(); ++k) seg[k] = base + rel.dst_index[k];
    });
    total += rel.size();
  }
  mi.relation_offsets[num_relations] = total;
  if (total == 0) {
    mi.feature_cat = Matrix<T>(0, width);
    return mi;
  }

  KernelDesc cat_f{"concat_features", Stage::NeighborAggregation, layer_id, -1,
                   total * width * sizeof(T), total * width * sizeof(T), std::nullopt};
  mi.feature_cat = device.submit(cat_f, [&] {
    Matrix<T> cat(total, width);
    for (std::size_t r = 0; r < num_relations; ++r) {
      if (features[r].empty()) continue;
      std::copy(features[r].values().begin(), features[r].values().end(), cat.data() + mi.relation_offsets[r] * width);
    }
    return cat;
  });
  KernelDesc cat_i{"concat_index", Stage::NeighborAggregation, layer_id, -1,
                   total * (sizeof(LocalId) + (weighted ? sizeof(T) : 0)),
                   total * (sizeof(LocalId) + (weighted ? sizeof(T) : 0)), std::nullopt};
  device.submit(cat_i, [&] {
    mi.dst_index_cat.reserve(total);
    if (weighted) mi.edge_weight.reserve(total);
    for (std::size_t r = 0; r < num_relations; ++r) {
      mi.dst_index_cat.insert(mi.dst_index_cat.end(), segment_ids[r].begin(), segment_ids[r].end());
      if (weighted) mi.edge_weight.insert(mi.edge_weight.end(), row_weights[r].begin(), row_weights[r].end());
    }
  });
  return mi;
}

template <typename T>
std::vector<FeatureView<T>> relation_views(const SemanticLayer& layer, const FeatureStore<T>& fs) {
  std::vector<FeatureView<T>> views;
  views.reserve(layer.relations.size());
  for (const auto& rel : layer.relations) views.push_back(fs.view(rel.src_type));
  return views;
}

template <typename T>
MergedAggregationInput<T> build_merged_input(const SemanticGraphSet& sgs, std::size_t layer,
                                             const FeatureStore<T>& fs, const SegmentLayout& segments,
                                             DeviceQueue& device) {
  const auto& sl = sgs.layers.at(layer);
  const auto views = relation_views(sl, fs);
  return build_merged_input<T>(sl, views, segments, device, EdgeNorm::None, {}, static_cast<int>(layer));
}

#define HETFLOW_INSTANTIATE(T)                                                                                  \
  template class FeatureStore<T>;                                                                               \
  template FeatureStore<T> reorganize(const FeatureStore<T>&);                                                  \
  template FeatureStore<T> random_features<T>(const HeteroGraph&, std::uint64_t, Layout);                       \
  template FeatureStore<T> load_features<T>(const std::filesystem::path&, const HeteroGraph&);                  \
  template void save_features(const FeatureStore<T>&, const HeteroGraph&, const std::filesystem::path&);        \
  template FeatureStore<T> collect_features(const FeatureStore<T>&, const std::vector<std::vector<LocalId>>&);  \
  template Matrix<T> gather_rows(const FeatureView<T>&, std::span<const LocalId>, DeviceQueue&, int, int,       \
                                 std::span<const T>);                                                           \
  template Matrix<T> gather_features(const FeatureStore<T>&, TypeId, std::span<const LocalId>, DeviceQueue&);   \
  template MergedAggregationInput<T> build_merged_input(const SemanticLayer&, std::span<const FeatureView<T>>,  \
                                                        const SegmentLayout&, DeviceQueue&, EdgeNorm,           \
                                                        std::span<const std::vector<T>>, int);                  \
  template MergedAggregationInput<T> build_merged_input(const SemanticGraphSet&, std::size_t,                   \
                                                        const FeatureStore<T>&, const SegmentLayout&,           \
                                                        DeviceQueue&);                                          \
  template std::vector<FeatureView<T>> relation_views(const SemanticLayer&, const FeatureStore<T>&);            \
  template std::vector<T> inverse_degree_weights<T>(std::span<const LocalId>, LocalId);

HETFLOW_INSTANTIATE(float)
HETFLOW_INSTANTIATE(double)

#undef HETFLOW_INSTANTIATE

}  // namespace hetflow
