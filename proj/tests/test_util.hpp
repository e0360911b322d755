// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and brute-force oracles for the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "hetflow/aggregate.hpp"
#include "hetflow/feature_store.hpp"
#include "hetflow/hetgraph.hpp"
#include "hetflow/model.hpp"
#include "hetflow/sampler.hpp"
#include "hetflow/semantic_build.hpp"

namespace hetflow::fx {

inline std::shared_ptr<KernelTrace> new_trace() { return std::make_shared<KernelTrace>(); }

/// Random small heterogeneous graph; every type gets a few vertices.
inline HeteroGraph random_graph(std::uint64_t seed, std::uint32_t max_types, std::uint32_t max_relations,
                                LocalId max_count, std::uint64_t max_edges, std::uint32_t dim = 4) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };
  SyntheticSpec spec;
  spec.num_types = static_cast<std::uint32_t>(pick(1, max_types));
  spec.num_relations = static_cast<std::uint32_t>(pick(1, max_relations));
  for (std::uint32_t t = 0; t < spec.num_types; ++t) spec.type_counts.push_back(static_cast<LocalId>(pick(2, max_count)));
  spec.num_edges = pick(1, max_edges);
  spec.feature_dim = dim;
  spec.skew = std::uniform_real_distribution<double>(0.0, 1.2)(rng);
  spec.seed = seed;
  return generate_synthetic(spec);
}

/// Distinct random seeds of one type.
inline std::vector<SeedVertex> random_seeds(const HeteroGraph& g, TypeId type, std::size_t n, std::mt19937_64& rng) {
  std::vector<LocalId> ids(g.vertex_types[type].count);
  for (LocalId i = 0; i < ids.size(); ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min(n, ids.size()));
  std::vector<SeedVertex> out;
  for (const auto id : ids) out.push_back({type, id});
  return out;
}

/// Brute-force column scan of each layer block.
inline SemanticGraphSet partition_oracle(const MiniBatch& b, const HeteroGraph& g) {
  SemanticGraphSet out;
  for (const auto& block : b.layers) {
    SemanticLayer sl;
    sl.src_count = block.src_count();
    sl.dst_count = block.dst_count;
    sl.relations.resize(g.num_relations());
    for (RelationId r = 0; r < g.num_relations(); ++r) {
      sl.relations[r].src_type = g.relations[r].src_type;
      sl.relations[r].dst_type = g.relations[r].dst_type;
    }
    for (std::size_t k = 0; k < block.edge_id.size(); ++k) {
      auto& rel = sl.relations[g.global_edge_type[block.edge_id[k]]];
      rel.src_index.push_back(block.src[k]);
      rel.dst_index.push_back(block.dst[k]);
    }
    out.layers.push_back(std::move(sl));
  }
  return out;
}

/// Random single-layer semantic graph set over given type counts.
inline SemanticLayer random_layer(std::mt19937_64& rng, const std::vector<LocalId>& src_count,
                                  const std::vector<LocalId>& dst_count, std::size_t relations, std::size_t max_edges) {
  const auto types = src_count.size();
  SemanticLayer sl;
  sl.src_count = src_count;
  sl.dst_count = dst_count;
  std::uniform_int_distribution<std::size_t> pick_type(0, types - 1);
  std::uniform_int_distribution<std::size_t> pick_n(0, max_edges / std::max<std::size_t>(relations, 1));
  for (std::size_t r = 0; r < relations; ++r) {
    RelationEdges rel;
    rel.src_type = static_cast<TypeId>(pick_type(rng));
    rel.dst_type = static_cast<TypeId>(pick_type(rng));
    // some relations are left empty on purpose
    const std::size_t n = rng() % 5 == 0 ? 0 : pick_n(rng);
    for (std::size_t k = 0; k < n; ++k) {
      rel.src_index.push_back(static_cast<LocalId>(rng() % src_count[rel.src_type]));
      rel.dst_index.push_back(static_cast<LocalId>(rng() % dst_count[rel.dst_type]));
    }
    sl.relations.push_back(std::move(rel));
  }
  return sl;
}

/// Type-major store with N(0,1) rows, computed in double and cast.
template <typename T>
FeatureStore<T> random_store(std::mt19937_64& rng, const std::vector<LocalId>& counts, std::size_t width) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Matrix<T>> blocks;
  for (const auto c : counts) {
    Matrix<T> m(c, width);
    for (auto& v : m.values()) v = static_cast<T>(nd(rng));
    blocks.push_back(std::move(m));
  }
  return FeatureStore<T>::type_major(std::move(blocks));
}

/// fp64 per-edge accumulation of one relation. `magnitude` (optional)
/// receives the same reduction over |x|, the scale that rounding error in
/// any summation order is proportional to.
template <typename T>
Matrix<double> edge_loop(const FeatureStore<T>& fs, const RelationEdges& rel, LocalId dst_count, bool mean,
                         Matrix<double>* magnitude = nullptr) {
  Matrix<double> out(dst_count, fs.width());
  Matrix<double> mag(dst_count, fs.width());
  std::vector<double> deg(dst_count, 0.0);
  for (std::size_t k = 0; k < rel.size(); ++k) {
    const auto row = fs.lookup(rel.src_type, rel.src_index[k]);
    for (std::size_t c = 0; c < row.size(); ++c) {
      out(rel.dst_index[k], c) += static_cast<double>(row[c]);
      mag(rel.dst_index[k], c) += std::abs(static_cast<double>(row[c]));
    }
    deg[rel.dst_index[k]] += 1.0;
  }
  if (mean) {
    for (LocalId d = 0; d < dst_count; ++d) {
      if (deg[d] == 0) continue;
      for (std::size_t c = 0; c < out.cols(); ++c) {
        out(d, c) /= deg[d];
        mag(d, c) /= deg[d];
      }
    }
  }
  if (magnitude) *magnitude = std::move(mag);
  return out;
}

/// Largest |a - b| / max(magnitude, floor). With magnitude = reduction of
/// |x| this is the usual relative error of a computed sum.
template <typename A>
double max_err_vs_magnitude(const Matrix<A>& a, const Matrix<double>& b, const Matrix<double>& magnitude,
                            double floor = 1e-7) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(static_cast<double>(a.values()[i]) - b.values()[i]);
    worst = std::max(worst, diff / std::max(magnitude.values()[i], floor));
  }
  return worst;
}

/// Largest |a - b| / max(|b|, floor) over all entries; infinity on shape mismatch.
template <typename A, typename B>
double max_rel_err(const Matrix<A>& a, const Matrix<B>& b, double floor = 1e-7) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a.values()[i]);
    const double y = static_cast<double>(b.values()[i]);
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(y), floor));
  }
  return worst;
}

/// Relative error against the largest reference magnitude; stable for
/// entries that cancel to ~0.
template <typename A, typename B>
double max_scaled_err(const Matrix<A>& a, const Matrix<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double scale = 0, worst = 0;
  for (std::size_t i = 0; i < b.size(); ++i) scale = std::max(scale, std::abs(static_cast<double>(b.values()[i])));
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i])));
  }
  return scale > 0 ? worst / scale : worst;
}

/// A sampled batch plus everything forward() needs.
template <typename T>
struct Prepared {
  MiniBatch batch;
  SemanticGraphSet sgs;
  FeatureStore<T> features;
};

template <typename T>
Prepared<T> prepare(const HeteroGraph& g, const FeatureStore<T>& global, std::span<const SeedVertex> seeds,
                    std::vector<int> fanout, std::uint64_t seed, const LabelSet* labels = nullptr) {
  NeighborSampler sampler(g);
  Prepared<T> p;
  p.batch = sampler.sample(seeds, fanout, seed, labels);
  p.sgs = select_edge_indices_serial(p.batch, g);
  p.features = collect_features(global, p.batch.layers.front().vertex_map);
  return p;
}

inline ModelConfig model_config(const HeteroGraph& g, ModelKind kind, std::size_t layers, std::size_t in_dim,
                                std::size_t hidden, std::size_t classes) {
  ModelConfig mc;
  mc.kind = kind;
  mc.num_layers = layers;
  mc.in_dim = in_dim;
  mc.hidden = hidden;
  mc.num_classes = classes;
  mc.num_types = g.num_types();
  mc.num_relations = g.num_relations();
  return mc;
}

/// Max relative error between analytic and central-difference gradients of
/// the loss, over every parameter (or a stride of them when `stride` > 1).
/// Uses error / max(|analytic|, |numeric|, floor).
struct GradCheck {
  double worst = 0;
  std::size_t checked = 0;
};

inline GradCheck check_model_gradients(const HeteroGraph& g, const Prepared<double>& p, const ModelParams<double>& params,
                                       AggregationPath path, double eps = 1e-6, std::size_t stride = 1,
                                       double floor = 1e-6) {
  auto trace = new_trace();
  DeviceQueue dev("grad", Nanos(0), trace);
  TrainState<double> st;
  st.params = params;
  st.grads = ModelParams<double>::zeros_like(params);
  st.learning_rate = 0;
  ForwardCache<double> cache;
  const auto logits = forward(st.params, p.batch, p.sgs, p.features, path, dev, &cache);
  backward_and_step<double>(st, cache, logits, p.batch.labels, dev);
  (void)g;

  GradCheck gc;
  auto perturbed = params;
  auto loss_at = [&](const ModelParams<double>& q) {
    const auto l = forward(q, p.batch, p.sgs, p.features, path, dev);
    return cross_entropy<double>(l, p.batch.labels);
  };
  std::size_t counter = 0;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    for (std::size_t i = 0; i < params.tensors[t].size(); ++i) {
      if (counter++ % stride != 0) continue;
      const double orig = params.tensors[t].values()[i];
      perturbed.tensors[t].values()[i] = orig + eps;
      const double up = loss_at(perturbed);
      perturbed.tensors[t].values()[i] = orig - eps;
      const double down = loss_at(perturbed);
      perturbed.tensors[t].values()[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = st.grads.tensors[t].values()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
      gc.worst = std::max(gc.worst, std::abs(numeric - analytic) / denom);
      ++gc.checked;
    }
  }
  return gc;
}

struct Instance {
  SemanticLayer layer;
  std::vector<LocalId> src;
  std::vector<LocalId> dst;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t types, std::size_t relations, std::size_t max_edges) {
  Instance in;
  for (std::size_t t = 0; t < types; ++t) {
    in.src.push_back(static_cast<LocalId>(1 + rng() % 60));
    in.dst.push_back(static_cast<LocalId>(1 + rng() % 20));
  }
  in.layer = random_layer(rng, in.src, in.dst, relations, max_edges);
  return in;
}

// merged oracle: every edge of every relation into one packed segment space
template <typename T>
Matrix<double> merged_oracle(const FeatureStore<T>& fs, const Instance& in, const SegmentLayout& seg, bool per_rel_mean,
                             bool total_mean, Matrix<double>* magnitude) {
  Matrix<double> out(seg.segment_count(), fs.width());
  Matrix<double> mag(seg.segment_count(), fs.width());
  std::vector<double> deg(seg.segment_count(), 0);
  for (const auto& rel : in.layer.relations) {
    Matrix<double> m;
    const auto part = edge_loop(fs, rel, in.dst[rel.dst_type], per_rel_mean, &m);
    for (LocalId d = 0; d < in.dst[rel.dst_type]; ++d) {
      for (std::size_t c = 0; c < fs.width(); ++c) {
        out(seg.base[rel.dst_type] + d, c) += part(d, c);
        mag(seg.base[rel.dst_type] + d, c) += m(d, c);
      }
    }
    for (const auto d : rel.dst_index) deg[seg.base[rel.dst_type] + d] += 1;
  }
  if (total_mean) {
    for (std::size_t s = 0; s < out.rows(); ++s) {
      if (deg[s] == 0) continue;
      for (std::size_t c = 0; c < out.cols(); ++c) {
        out(s, c) /= deg[s];
        mag(s, c) /= deg[s];
      }
    }
  }
  *magnitude = std::move(mag);
  return out;
}

inline std::size_t count(const KernelTrace& t, const std::string& name) {
  std::size_t n = 0;
  for (const auto& r : t.records()) n += r.name == name;
  return n;
}

/// Element-wise precision casts for mixed-precision comparisons.
template <typename T>
FeatureStore<T> cast_store(const FeatureStore<double>& fs) {
  std::vector<Matrix<T>> blocks;
  for (TypeId t = 0; t < fs.num_types(); ++t) {
    const auto& b = fs.block(t);
    Matrix<T> m(b.rows(), b.cols());
    for (std::size_t i = 0; i < b.size(); ++i) m.values()[i] = static_cast<T>(b.values()[i]);
    blocks.push_back(std::move(m));
  }
  return FeatureStore<T>::type_major(std::move(blocks));
}

template <typename T>
ModelParams<T> cast_params(const ModelParams<double>& p) {
  ModelParams<T> out;
  out.config = p.config;
  for (const auto& m : p.tensors) {
    Matrix<T> c(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) c.values()[i] = static_cast<T>(m.values()[i]);
    out.tensors.push_back(std::move(c));
  }
  return out;
}

}  // namespace hetflow::fx
