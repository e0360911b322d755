// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include <json.hpp>

namespace hetflow {

const char* model_name(ModelKind k) noexcept { return k == ModelKind::RGCN ? "rgcn" : "rgat"; }

std::optional<ModelKind> parse_model(std::string_view name) noexcept {
  if (name == "rgcn") return ModelKind::RGCN;
  if (name == "rgat") return ModelKind::RGAT;
  return std::nullopt;
}

const char* path_name(AggregationPath p) noexcept {
  return p == AggregationPath::PerRelation ? "per_relation" : "merged";
}

void ModelConfig::check() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw InvalidArgument(std::string("model config: invalid ") + field);
  };
  require(num_layers >= 1, "num_layers");
  require(in_dim >= 1, "in_dim");
  require(hidden >= 1, "hidden");
  require(num_classes >= 1, "num_classes");
  require(num_types >= 1, "num_types");
  require(num_relations >= 1, "num_relations");
  require(std::isfinite(leaky_slope), "leaky_slope");
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.check();
  ModelParams p;
  p.config = config;
  p.tensors.resize(config.num_layers * p.per_layer());
  auto uniform = [&](std::size_t index, std::size_t rows, std::size_t cols, double limit) {
    std::mt19937_64 rng(mix_seed(seed, index));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix<T> m(rows, cols);
    for (T& v : m.values()) v = static_cast<T>(dist(rng));
    p.tensors[index] = std::move(m);
  };
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = config.layer_in(l);
    const std::size_t out = config.layer_out(l);
    const double w_limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t r = 0; r < config.num_relations; ++r) {
      uniform(p.weight(l, r), in, out, w_limit);
      p.tensors[p.bias(l, r)] = Matrix<T>(1, out);
    }
    for (std::size_t t = 0; t < config.num_types; ++t) uniform(p.self(l, t), in, out, w_limit);
    if (config.kind == ModelKind::RGAT) {
      const double a_limit = std::sqrt(6.0 / static_cast<double>(out + 1));
      for (std::size_t r = 0; r < config.num_relations; ++r) {
        uniform(p.att_src(l, r), 1, out, a_limit);
        uniform(p.att_dst(l, r), 1, out, a_limit);
      }
    }
  }
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.config = other.config;
  p.tensors.reserve(other.tensors.size());
  for (const auto& m : other.tensors) p.tensors.emplace_back(m.rows(), m.cols());
  return p;
}

template <typename T>
std::size_t ModelParams<T>::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& m : tensors) n += m.size();
  return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const noexcept {
  for (const auto& m : tensors) {
    for (const T v : m.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <typename T>
TrainState<T> TrainState<T>::create(const ModelConfig& config, double learning_rate, std::uint64_t seed) {
  TrainState s;
  s.params = ModelParams<T>::init(config, seed);
  s.grads = ModelParams<T>::zeros_like(s.params);
  s.learning_rate = learning_rate;
  s.seed = seed;
  return s;
}

namespace {

template <typename T>
std::uint64_t matmul_bytes(std::size_t rows, std::size_t in, std::size_t out) {
  return (static_cast<std::uint64_t>(rows) * (in + out) + in * out) * sizeof(T);
}

template <typename T>
std::vector<FeatureView<T>> input_views(const ForwardCache<T>& c, std::size_t l) {
  const std::size_t num_types = c.features->num_types();
  std::vector<FeatureView<T>> views(num_types);
  for (TypeId t = 0; t < num_types; ++t) {
    if (l == 0) {
      views[t] = c.features->view(t);
    } else {
      const auto& prev = c.layers[l - 1];
      const LocalId base = prev.segments.base[t];
      views[t] = dense_view(prev.output.ref().slice(base, base + prev.segments.count[t]), base,
                            static_cast<std::int64_t>(t));
    }
  }
  return views;
}

/// First n rows of a view as a dense block; copies only when the view is
/// scattered through a row map.
template <typename T>
MatrixRef<T> leading_rows(const FeatureView<T>& v, LocalId n, Matrix<T>& scratch) {
  if (v.contiguous()) return v.base.top(n);
  scratch = Matrix<T>(n, v.width());
  for (LocalId i = 0; i < n; ++i) {
    const auto src = v.row(i);
    std::copy(src.begin(), src.end(), scratch.row(i).begin());
  }
  return scratch.ref();
}

template <typename T>
Matrix<T> project(MatrixRef<T> x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> p(x.rows, w.cols());
  for (std::size_t i = 0; i < x.rows; ++i) std::copy(b.values().begin(), b.values().end(), p.row(i).begin());
  gemm_acc(x, w.ref(), p);
  return p;
}

template <typename T>
void add_rows(MatrixRef<T> src, Matrix<T>& dst, std::size_t dst_begin) {
  for (std::size_t i = 0; i < src.rows; ++i) {
    const auto s = src.row(i);
    auto d = dst.row(dst_begin + i);
    for (std::size_t c = 0; c < s.size(); ++c) d[c] += s[c];
  }
}

template <typename T>
void check_inputs(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                  const FeatureStore<T>& features) {
  const auto& cfg = params.config;
  auto fail = [](const std::string& what) { throw InvalidArgument("dimension mismatch: " + what); };
  if (batch.num_layers() != cfg.num_layers) {
    fail("batch has " + std::to_string(batch.num_layers()) + " layers, model has " + std::to_string(cfg.num_layers));
  }
  if (sgs.layers.size() != cfg.num_layers) fail("semantic graph set layer count");
  if (features.width() != cfg.in_dim) {
    fail("feature width " + std::to_string(features.width()) + ", model expects " + std::to_string(cfg.in_dim));
  }
  if (features.num_types() != cfg.num_types) fail("feature store type count");
  const auto src_count = batch.layers[0].src_count();
  for (TypeId t = 0; t < cfg.num_types; ++t) {
    if (features.count(t) != src_count.at(t)) fail("feature rows of type " + std::to_string(t));
  }
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& sl = sgs.layers[l];
    if (sl.relations.size() != cfg.num_relations) fail("relation count in layer " + std::to_string(l));
    if (sl.dst_count.size() != cfg.num_types || sl.src_count.size() != cfg.num_types) {
      fail("type count in layer " + std::to_string(l));
    }
    if (l > 0 && sl.src_count != sgs.layers[l - 1].dst_count) fail("layer " + std::to_string(l) + " sources");
  }
}

template <typename T>
void attention_forward(const ModelParams<T>& params, std::size_t l, std::size_t r, const RelationEdges& rel,
                       const FeatureView<T>& pview, const FeatureView<T>& dst_view, LocalId n_dst,
                       RelationCache<T>& rc, DeviceQueue& device) {
  const auto& w = params.tensors[params.weight(l, r)];
  const auto& b = params.tensors[params.bias(l, r)];
  const auto a_src = params.tensors[params.att_src(l, r)].row(0);
  const auto a_dst = params.tensors[params.att_dst(l, r)].row(0);
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  const int li = static_cast<int>(l);
  const int ri = static_cast<int>(r);

  KernelDesc score{"attention_score", Stage::NeighborAggregation, li, ri,
                   (rel.size() + n_dst) * (in + out) * sizeof(T), rel.size() * sizeof(T), std::nullopt};
  device.submit(score, [&] {
    std::vector<T> v(in);
    for (std::size_t i = 0; i < in; ++i) v[i] = dot<T>(w.row(i), a_dst);
    const T c0 = dot<T>(b.row(0), a_dst);
    std::vector<T> s_dst(n_dst);
    for (LocalId d = 0; d < n_dst; ++d) s_dst[d] = dot<T>(dst_view.row(d), v) + c0;
    rc.score.resize(rel.size());
    for (std::size_t k = 0; k < rel.size(); ++k) {
      rc.score[k] = dot<T>(pview.row(rel.src_index[k]), a_src) + s_dst[rel.dst_index[k]];
    }
  });

  const T slope = static_cast<T>(params.config.leaky_slope);
  KernelDesc softmax{"edge_softmax", Stage::NeighborAggregation, li, ri, rel.size() * (sizeof(T) + sizeof(LocalId)),
                     rel.size() * sizeof(T), std::nullopt};
  device.submit(softmax, [&] {
    std::vector<T> peak(n_dst, -std::numeric_limits<T>::infinity());
    std::vector<T> total(n_dst, T(0));
    rc.weights.resize(rel.size());
    for (std::size_t k = 0; k < rel.size(); ++k) {
      const T s = rc.score[k];
      rc.weights[k] = s > T(0) ? s : slope * s;
      peak[rel.dst_index[k]] = std::max(peak[rel.dst_index[k]], rc.weights[k]);
    }
    for (std::size_t k = 0; k < rel.size(); ++k) {
      rc.weights[k] = std::exp(rc.weights[k] - peak[rel.dst_index[k]]);
      total[rel.dst_index[k]] += rc.weights[k];
    }
    for (std::size_t k = 0; k < rel.size(); ++k) rc.weights[k] /= total[rel.dst_index[k]];
  });
}

}  // namespace

template <typename T>
Matrix<T> forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                  const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                  ForwardCache<T>* cache) {
  check_inputs(params, batch, sgs, features);
  const auto& cfg = params.config;
  const bool rgat = cfg.kind == ModelKind::RGAT;
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.batch = &batch;
  c.sgs = &sgs;
  c.features = &features;
  c.path = path;
  c.layers.clear();
  c.layers.resize(cfg.num_layers);

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& sl = sgs.layers[l];
    auto& lc = c.layers[l];
    const auto views = input_views(c, l);
    const std::size_t in = cfg.layer_in(l);
    const std::size_t out = cfg.layer_out(l);
    const int li = static_cast<int>(l);
    lc.segments = SegmentLayout::packed(sl.dst_count);
    Matrix<T> z(lc.segments.segment_count(), out);

    for (TypeId t = 0; t < cfg.num_types; ++t) {
      const LocalId n = sl.dst_count[t];
      if (n == 0) continue;
      KernelDesc desc{"self_transform", Stage::FeatureProjection, li, -1, matmul_bytes<T>(n, in, out),
                      n * out * sizeof(T), std::nullopt};
      device.submit(desc, [&] {
        Matrix<T> scratch;
        const auto x = leading_rows(views[t], n, scratch);
        const Matrix<T> s = matmul(x, params.tensors[params.self(l, t)].ref());
        std::copy(s.values().begin(), s.values().end(), z.row(lc.segments.base[t]).begin());
      });
    }

    lc.relations.resize(cfg.num_relations);
    std::vector<FeatureView<T>> pviews(cfg.num_relations);
    for (std::size_t r = 0; r < cfg.num_relations; ++r) {
      const auto& rel = sl.relations[r];
      if (rel.empty()) continue;
      auto& rc = lc.relations[r];
      const auto& src = views[rel.src_type];
      KernelDesc desc{"matmul", Stage::FeatureProjection, li, static_cast<int>(r),
                      matmul_bytes<T>(src.base.rows, in, out), src.base.rows * out * sizeof(T), std::nullopt};
      rc.projected = device.submit(desc, [&] {
        return project(src.base, params.tensors[params.weight(l, r)], params.tensors[params.bias(l, r)]);
      });
      pviews[r] = src;
      pviews[r].base = rc.projected.ref();
      if (rgat) {
        attention_forward(params, l, r, rel, pviews[r], views[rel.dst_type], sl.dst_count[rel.dst_type], rc, device);
      }
    }

    if (path == AggregationPath::PerRelation) {
      const Reducer reducer = rgat ? Reducer::Sum : Reducer::Mean;
      for (std::size_t r = 0; r < cfg.num_relations; ++r) {
        const auto& rel = sl.relations[r];
        if (rel.empty()) continue;
        const LocalId n_dst = sl.dst_count[rel.dst_type];
        const auto agg = aggregate_relation<T>(pviews[r], rel, n_dst, reducer, device, li, static_cast<int>(r),
                                               lc.relations[r].weights);
        KernelDesc fuse{"semantic_fuse", Stage::SemanticFusion, li, static_cast<int>(r),
                        2 * n_dst * out * sizeof(T), n_dst * out * sizeof(T), std::nullopt};
        device.submit(fuse, [&] { add_rows(agg.values.ref(), z, lc.segments.base[rel.dst_type]); });
      }
    } else {
      std::vector<std::vector<T>> alpha;
      if (rgat) {
        alpha.resize(cfg.num_relations);
        for (std::size_t r = 0; r < cfg.num_relations; ++r) alpha[r] = std::move(lc.relations[r].weights);
      }
      lc.merged = build_merged_input<T>(sl, pviews, lc.segments, device,
                                        rgat ? EdgeNorm::None : EdgeNorm::InverseDegree, alpha, li);
      for (std::size_t r = 0; r < cfg.num_relations; ++r) {
        auto& weights = lc.relations[r].weights;
        if (rgat) {
          weights = std::move(alpha[r]);
        } else if (!sl.relations[r].empty()) {
          const auto* w = lc.merged.edge_weight.data();
          weights.assign(w + lc.merged.relation_offsets[r], w + lc.merged.relation_offsets[r + 1]);
        }
      }
      const auto agg = aggregate_merged(lc.merged, Reducer::Sum, device, li);
      KernelDesc fuse{"semantic_fuse", Stage::SemanticFusion, li, -1, 2 * z.size() * sizeof(T), z.size() * sizeof(T),
                      std::nullopt};
      device.submit(fuse, [&] { add_rows(agg.values.ref(), z, 0); });
    }

    if (l + 1 < cfg.num_layers) {
      KernelDesc relu{"relu", Stage::SemanticFusion, li, -1, z.size() * sizeof(T), z.size() * sizeof(T), std::nullopt};
      device.submit(relu, [&] {
        for (T& v : z.values()) v = v > T(0) ? v : T(0);
      });
    }
    lc.output = std::move(z);
  }

  const auto& last = c.layers.back();
  Matrix<T> logits(batch.seeds.size(), cfg.num_classes);
  for (std::size_t i = 0; i < batch.seeds.size(); ++i) {
    const auto row = last.output.row(last.segments.base[batch.seeds[i].type] + batch.seed_position[i]);
    std::copy(row.begin(), row.end(), logits.row(i).begin());
  }
  return logits;
}

template <typename T>
Matrix<T> rgcn_forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                       const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                       ForwardCache<T>* cache) {
  if (params.config.kind != ModelKind::RGCN) throw InvalidArgument("rgcn_forward: parameters belong to an RGAT model");
  return forward(params, batch, sgs, features, path, device, cache);
}

template <typename T>
Matrix<T> rgat_forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                       const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                       ForwardCache<T>* cache) {
  if (params.config.kind != ModelKind::RGAT) throw InvalidArgument("rgat_forward: parameters belong to an RGCN model");
  return forward(params, batch, sgs, features, path, device, cache);
}

template <typename T>
T cross_entropy(MatrixRef<T> logits, std::span<const std::int32_t> labels, Matrix<T>* grad) {
  if (labels.size() != logits.rows) throw InvalidArgument("cross_entropy: label count mismatch");
  if (grad) *grad = Matrix<T>(logits.rows, logits.cols);
  if (logits.rows == 0) return T(0);
  const T inv_n = T(1) / static_cast<T>(logits.rows);
  T loss = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto z = logits.row(i);
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
      throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    const T peak = *std::max_element(z.begin(), z.end());
    T total = 0;
    for (const T v : z) total += std::exp(v - peak);
    const T lse = peak + std::log(total);
    loss += lse - z[y];
    if (grad) {
      auto g = grad->row(i);
      for (std::size_t c = 0; c < z.size(); ++c) g[c] = std::exp(z[c] - lse) * inv_n;
      g[y] -= inv_n;
    }
  }
  return loss * inv_n;
}

namespace {

template <typename T>
void attention_backward(const ModelParams<T>& params, ModelParams<T>& grads, std::size_t l, std::size_t r,
                        const RelationEdges& rel, const RelationCache<T>& rc, MatrixRef<T> edge_grad,
                        const FeatureView<T>& pview, const FeatureView<T>& dst_view, LocalId n_dst, Matrix<T>& dp,
                        Matrix<T>* dx, std::size_t dx_base, DeviceQueue& device) {
  const auto& w = params.tensors[params.weight(l, r)];
  const auto& b = params.tensors[params.bias(l, r)];
  const auto a_src = params.tensors[params.att_src(l, r)].row(0);
  const auto a_dst = params.tensors[params.att_dst(l, r)].row(0);
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  const T slope = static_cast<T>(params.config.leaky_slope);

  KernelDesc desc{"attention_backward", Stage::NeighborAggregation, static_cast<int>(l), static_cast<int>(r),
                  rel.size() * (2 * out + 3) * sizeof(T), (rel.size() + n_dst) * out * sizeof(T), std::nullopt};
  device.submit(desc, [&] {
    auto& g_w = grads.tensors[grads.weight(l, r)];
    auto g_b = grads.tensors[grads.bias(l, r)].row(0);
    auto g_asrc = grads.tensors[grads.att_src(l, r)].row(0);
    auto g_adst = grads.tensors[grads.att_dst(l, r)].row(0);
    const auto& alpha = rc.weights;

    std::vector<T> d_alpha(rel.size());
    std::vector<T> seg(n_dst, T(0));
    for (std::size_t k = 0; k < rel.size(); ++k) {
      d_alpha[k] = dot<T>(edge_grad.row(k), pview.row(rel.src_index[k]));
      seg[rel.dst_index[k]] += alpha[k] * d_alpha[k];
    }
    std::vector<T> ds_dst(n_dst, T(0));
    for (std::size_t k = 0; k < rel.size(); ++k) {
      const T de = alpha[k] * (d_alpha[k] - seg[rel.dst_index[k]]);
      const T dpre = rc.score[k] > T(0) ? de : slope * de;
      const auto p = pview.row(rel.src_index[k]);
      auto dpr = dp.row(pview.base_row(rel.src_index[k]));
      for (std::size_t j = 0; j < out; ++j) {
        dpr[j] += dpre * a_src[j];
        g_asrc[j] += dpre * p[j];
      }
      ds_dst[rel.dst_index[k]] += dpre;
    }
    std::vector<T> xs(in, T(0));
    T sum_ds = 0;
    for (LocalId d = 0; d < n_dst; ++d) {
      if (ds_dst[d] == T(0)) continue;
      const auto x = dst_view.row(d);
      for (std::size_t i = 0; i < in; ++i) xs[i] += ds_dst[d] * x[i];
      sum_ds += ds_dst[d];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const auto wi = w.row(i);
      auto gwi = g_w.row(i);
      for (std::size_t j = 0; j < out; ++j) {
        g_adst[j] += xs[i] * wi[j];
        gwi[j] += xs[i] * a_dst[j];
      }
    }
    for (std::size_t j = 0; j < out; ++j) {
      g_adst[j] += sum_ds * b(0, j);
      g_b[j] += sum_ds * a_dst[j];
    }
    if (dx) {
      std::vector<T> v(in);
      for (std::size_t i = 0; i < in; ++i) v[i] = dot<T>(w.row(i), a_dst);
      for (LocalId d = 0; d < n_dst; ++d) {
        if (ds_dst[d] == T(0)) continue;
        auto row = dx->row(dx_base + d);
        for (std::size_t i = 0; i < in; ++i) row[i] += ds_dst[d] * v[i];
      }
    }
  });
}

}  // namespace

template <typename T>
T backward_and_step(TrainState<T>& state, const ForwardCache<T>& cache, MatrixRef<T> logits,
                    std::span<const std::int32_t> labels, DeviceQueue& device) {
  const auto& params = state.params;
  auto& grads = state.grads;
  const auto& cfg = params.config;
  if (!cache.batch || cache.layers.size() != cfg.num_layers) throw InvalidArgument("backward_and_step: missing forward cache");
  const MiniBatch& batch = *cache.batch;
  const SemanticGraphSet& sgs = *cache.sgs;
  if (logits.rows != batch.seeds.size() || logits.cols != cfg.num_classes) {
    throw InvalidArgument("backward_and_step: logits do not match the cached batch");
  }
  const bool rgat = cfg.kind == ModelKind::RGAT;
  const bool merged = cache.path == AggregationPath::Merged;

  KernelDesc zero{"zero_grad", Stage::Other, -1, -1, 0, grads.num_values() * sizeof(T), std::nullopt};
  device.submit(zero, [&] {
    for (auto& m : grads.tensors) m.fill(T(0));
  });

  const auto& last = cache.layers.back();
  Matrix<T> dz(last.output.rows(), cfg.num_classes);
  KernelDesc ce{"cross_entropy", Stage::Other, -1, -1, logits.rows * logits.cols * sizeof(T),
                logits.rows * logits.cols * sizeof(T), std::nullopt};
  const T loss = device.submit(ce, [&] {
    Matrix<T> dlogits;
    const T value = cross_entropy(logits, labels, &dlogits);
    for (std::size_t i = 0; i < batch.seeds.size(); ++i) {
      const auto g = dlogits.row(i);
      auto dst = dz.row(last.segments.base[batch.seeds[i].type] + batch.seed_position[i]);
      for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
    }
    return value;
  });
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(state.step) + " (batch " + std::to_string(batch.index) + ")");
  }

  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const auto& sl = sgs.layers[li];
    const auto& lc = cache.layers[li];
    const int lid = static_cast<int>(li);
    const std::size_t in = cfg.layer_in(li);
    const std::size_t out = cfg.layer_out(li);
    if (li + 1 < cfg.num_layers) {
      KernelDesc relu{"relu_backward", Stage::SemanticFusion, lid, -1, 2 * dz.size() * sizeof(T), dz.size() * sizeof(T),
                      std::nullopt};
      device.submit(relu, [&] {
        const auto z = lc.output.values();
        auto g = dz.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(z[i] > T(0))) g[i] = T(0);
        }
      });
    }
    const auto views = input_views(cache, li);
    const bool need_dx = li > 0;
    Matrix<T> dx;
    const SegmentLayout* prev = need_dx ? &cache.layers[li - 1].segments : nullptr;
    if (need_dx) dx = Matrix<T>(cache.layers[li - 1].output.rows(), in);

    for (TypeId t = 0; t < cfg.num_types; ++t) {
      const LocalId n = sl.dst_count[t];
      if (n == 0) continue;
      KernelDesc desc{"self_transform_backward", Stage::FeatureProjection, lid, -1, 2 * matmul_bytes<T>(n, in, out),
                      (in * out + (need_dx ? n * in : 0)) * sizeof(T), std::nullopt};
      device.submit(desc, [&] {
        Matrix<T> scratch;
        const auto x = leading_rows(views[t], n, scratch);
        const auto g = dz.ref().slice(lc.segments.base[t], lc.segments.base[t] + n);
        gemm_tn_acc(x, g, grads.tensors[grads.self(li, t)]);
        if (need_dx) {
          Matrix<T> tmp(n, in);
          gemm_nt_acc(g, params.tensors[params.self(li, t)].ref(), tmp);
          add_rows(tmp.ref(), dx, prev->base[t]);
        }
      });
    }

    Matrix<T> merged_grad;
    if (merged) merged_grad = aggregate_backward<T>(dz, lc.merged, Reducer::Sum, device, lid);

    for (std::size_t r = 0; r < cfg.num_relations; ++r) {
      const auto& rel = sl.relations[r];
      if (rel.empty()) continue;
      const auto& rc = lc.relations[r];
      const int rid = static_cast<int>(r);
      const LocalId n_dst = sl.dst_count[rel.dst_type];
      const std::size_t dst_base = lc.segments.base[rel.dst_type];
      Matrix<T> edge_grad_store;
      MatrixRef<T> edge_grad;
      if (merged) {
        edge_grad = merged_grad.ref().slice(lc.merged.relation_offsets[r], lc.merged.relation_offsets[r + 1]);
      } else {
        edge_grad_store = aggregate_relation_backward<T>(dz.ref().slice(dst_base, dst_base + n_dst), rel,
                                                         rgat ? Reducer::Sum : Reducer::Mean, device, lid, rid);
        edge_grad = edge_grad_store.ref();
      }

      const auto& src = views[rel.src_type];
      FeatureView<T> pview = src;
      pview.base = rc.projected.ref();
      Matrix<T> dp(rc.projected.rows(), out);
      index_add<T>(edge_grad, rel.src_index, src.rows, rc.weights, dp, device, lid, rid);
      if (rgat) {
        attention_backward(params, grads, li, r, rel, rc, edge_grad, pview, views[rel.dst_type], n_dst, dp,
                           need_dx ? &dx : nullptr, need_dx ? prev->base[rel.dst_type] : 0, device);
      }

      KernelDesc desc{"matmul_backward", Stage::FeatureProjection, lid, rid, 2 * matmul_bytes<T>(dp.rows(), in, out),
                      (in * out + out + (need_dx ? dp.rows() * in : 0)) * sizeof(T), std::nullopt};
      device.submit(desc, [&] {
        gemm_tn_acc(src.base, dp.ref(), grads.tensors[grads.weight(li, r)]);
        auto gb = grads.tensors[grads.bias(li, r)].row(0);
        for (std::size_t i = 0; i < dp.rows(); ++i) {
          const auto row = dp.row(i);
          for (std::size_t j = 0; j < out; ++j) gb[j] += row[j];
        }
        if (need_dx) {
          Matrix<T> tmp(dp.rows(), in);
          gemm_nt_acc(dp.ref(), params.tensors[params.weight(li, r)].ref(), tmp);
          add_rows(tmp.ref(), dx, prev->base[rel.src_type]);
        }
      });
    }
    dz = std::move(dx);
  }

  const T lr = static_cast<T>(state.learning_rate);
  KernelDesc sgd{"sgd_step", Stage::Other, -1, -1, 2 * params.num_values() * sizeof(T),
                 params.num_values() * sizeof(T), std::nullopt};
  device.submit(sgd, [&] {
    for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
      for (const T g : grads.tensors[i].values()) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient in parameter tensor " + std::to_string(i) + " at step " + std::to_string(state.step));
        }
      }
    }
    for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
      auto p = state.params.tensors[i].values();
      const auto g = grads.tensors[i].values();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
    }
  });
  ++state.step;
  return loss;
}

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

}  // namespace

template <typename T>
void save_checkpoint(const TrainState<T>& state, const std::filesystem::path& prefix) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  const auto& cfg = state.params.config;
  nlohmann::json manifest;
  manifest["format"] = "hetflow-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = dtype_name<T>();
  manifest["model"] = model_name(cfg.kind);
  manifest["num_layers"] = cfg.num_layers;
  manifest["in_dim"] = cfg.in_dim;
  manifest["hidden"] = cfg.hidden;
  manifest["num_classes"] = cfg.num_classes;
  manifest["num_types"] = cfg.num_types;
  manifest["num_relations"] = cfg.num_relations;
  manifest["leaky_slope"] = cfg.leaky_slope;
  manifest["seed"] = state.seed;
  manifest["step"] = state.step;
  manifest["learning_rate"] = state.learning_rate;
  auto& shapes = manifest["tensors"] = nlohmann::json::array();
  for (const auto& m : state.params.tensors) shapes.push_back({m.rows(), m.cols()});

  auto bin_path = prefix;
  bin_path += ".bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error("cannot write checkpoint " + bin_path.string());
  for (const auto& m : state.params.tensors) {
    bin.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
  }
  auto json_path = prefix;
  json_path += ".json";
  std::ofstream js(json_path);
  if (!js) throw Error("cannot write checkpoint manifest " + json_path.string());
  js << manifest.dump(2) << '\n';
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& prefix) {
  auto json_path = prefix;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open checkpoint manifest " + json_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "hetflow-checkpoint") throw Error("not a checkpoint manifest: " + json_path.string());
  if (m.at("dtype").get<std::string>() != dtype_name<T>()) {
    throw Error("checkpoint dtype " + m.at("dtype").get<std::string>() + " does not match " + dtype_name<T>());
  }
  ModelConfig cfg;
  const auto kind = parse_model(m.at("model").get<std::string>());
  if (!kind) throw Error("checkpoint: unknown model " + m.at("model").get<std::string>());
  cfg.kind = *kind;
  cfg.num_layers = m.at("num_layers");
  cfg.in_dim = m.at("in_dim");
  cfg.hidden = m.at("hidden");
  cfg.num_classes = m.at("num_classes");
  cfg.num_types = m.at("num_types");
  cfg.num_relations = m.at("num_relations");
  cfg.leaky_slope = m.at("leaky_slope");

  TrainState<T> s = TrainState<T>::create(cfg, m.at("learning_rate").get<double>(), m.at("seed").get<std::uint64_t>());
  s.step = m.at("step");
  const auto& shapes = m.at("tensors");
  if (shapes.size() != s.params.tensors.size()) throw Error("checkpoint: tensor count does not match model config");
  auto bin_path = prefix;
  bin_path += ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error("cannot open checkpoint " + bin_path.string());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    auto& t = s.params.tensors[i];
    if (shapes[i][0].get<std::size_t>() != t.rows() || shapes[i][1].get<std::size_t>() != t.cols()) {
      throw Error("checkpoint: tensor " + std::to_string(i) + " shape does not match model config");
    }
    bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  }
  if (!bin || bin.peek() != std::char_traits<char>::eof()) throw Error("checkpoint: " + bin_path.string() + " has the wrong size");
  return s;
}

template <typename T>
LabelSet make_labels(const FeatureStore<T>& fs, TypeId target_type, std::uint32_t num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw InvalidArgument("make_labels: num_classes must be >= 1");
  const std::size_t width = fs.width();
  std::mt19937_64 rng(mix_seed(seed, 0x1abe1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> proj(width * num_classes);
  for (double& v : proj) v = normal(rng);
  LabelSet labels{target_type, num_classes, std::vector<std::int32_t>(fs.count(target_type))};
  for (LocalId v = 0; v < fs.count(target_type); ++v) {
    const auto x = fs.lookup(target_type, v);
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < width; ++i) s += static_cast<double>(x[i]) * proj[i * num_classes + c];
      if (s > best) {
        best = s;
        labels.values[v] = static_cast<std::int32_t>(c);
      }
    }
  }
  return labels;
}

#define HETFLOW_INSTANTIATE(T)                                                                                     \
  template struct ModelParams<T>;                                                                                  \
  template struct TrainState<T>;                                                                                   \
  template Matrix<T> forward(const ModelParams<T>&, const MiniBatch&, const SemanticGraphSet&,                     \
                             const FeatureStore<T>&, AggregationPath, DeviceQueue&, ForwardCache<T>*);             \
  template Matrix<T> rgcn_forward(const ModelParams<T>&, const MiniBatch&, const SemanticGraphSet&,                \
                                  const FeatureStore<T>&, AggregationPath, DeviceQueue&, ForwardCache<T>*);        \
  template Matrix<T> rgat_forward(const ModelParams<T>&, const MiniBatch&, const SemanticGraphSet&,                \
                                  const FeatureStore<T>&, AggregationPath, DeviceQueue&, ForwardCache<T>*);        \
  template T cross_entropy(MatrixRef<T>, std::span<const std::int32_t>, Matrix<T>*);                               \
  template T backward_and_step(TrainState<T>&, const ForwardCache<T>&, MatrixRef<T>, std::span<const std::int32_t>, \
                               DeviceQueue&);                                                                      \
  template void save_checkpoint(const TrainState<T>&, const std::filesystem::path&);                               \
  template TrainState<T> load_checkpoint<T>(const std::filesystem::path&);                                         \
  template LabelSet make_labels(const FeatureStore<T>&, TypeId, std::uint32_t, std::uint64_t);

HETFLOW_INSTANTIATE(float)
HETFLOW_INSTANTIATE(double)

#undef HETFLOW_INSTANTIATE

}  // namespace hetflow
