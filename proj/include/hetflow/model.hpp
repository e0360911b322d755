// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hetflow/aggregate.hpp"
#include "hetflow/device.hpp"
#include "hetflow/feature_store.hpp"
#include "hetflow/matrix.hpp"
#include "hetflow/sampler.hpp"
#include "hetflow/semantic_build.hpp"

namespace hetflow {

enum class ModelKind { RGCN, RGAT };
enum class AggregationPath { PerRelation, Merged };

const char* model_name(ModelKind k) noexcept;
std::optional<ModelKind> parse_model(std::string_view name) noexcept;
const char* path_name(AggregationPath p) noexcept;

struct ModelConfig {
  ModelKind kind = ModelKind::RGCN;
  std::size_t num_layers = 2;
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  std::size_t num_classes = 2;
  std::size_t num_types = 0;
  std::size_t num_relations = 0;
  /// Negative slope of the attention leaky ReLU (fixed, not trained).
  double leaky_slope = 0.2;

  std::size_t layer_in(std::size_t l) const noexcept { return l == 0 ? in_dim : hidden; }
  std::size_t layer_out(std::size_t l) const noexcept { return l + 1 == num_layers ? num_classes : hidden; }
  void check() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Flat list of parameter tensors. Per layer: W_r (in x out) for every
/// relation, b_r (1 x out), one self weight per vertex type, and for RGAT
/// a_src and a_dst (1 x out) per relation.
template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<Matrix<T>> tensors;

  /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros_like(const ModelParams& other);

  std::size_t weight(std::size_t l, std::size_t r) const noexcept { return layer_base(l) + r; }
  std::size_t bias(std::size_t l, std::size_t r) const noexcept { return layer_base(l) + config.num_relations + r; }
  std::size_t self(std::size_t l, std::size_t t) const noexcept {
    return layer_base(l) + 2 * config.num_relations + t;
  }
  std::size_t att_src(std::size_t l, std::size_t r) const noexcept {
    return layer_base(l) + 2 * config.num_relations + config.num_types + r;
  }
  std::size_t att_dst(std::size_t l, std::size_t r) const noexcept {
    return layer_base(l) + 3 * config.num_relations + config.num_types + r;
  }

  std::size_t num_values() const noexcept;
  bool all_finite() const noexcept;

 private:
  std::size_t per_layer() const noexcept {
    return (config.kind == ModelKind::RGAT ? 4 : 2) * config.num_relations + config.num_types;
  }
  std::size_t layer_base(std::size_t l) const noexcept { return l * per_layer(); }
};

template <typename T>
struct TrainState {
  ModelParams<T> params;
  ModelParams<T> grads;
  std::uint64_t step = 0;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;

  static TrainState create(const ModelConfig& config, double learning_rate, std::uint64_t seed);
};

template <typename T>
struct RelationCache {
  /// Projection of the source view's backing rows.
  Matrix<T> projected;
  /// Per-edge aggregation weights: 1/deg folded into merged rows (RGCN) or
  /// attention coefficients (RGAT). Empty for per-relation RGCN.
  std::vector<T> weights;
  /// RGAT pre-activation attention logits.
  std::vector<T> score;
};

template <typename T>
struct LayerCache {
  std::vector<RelationCache<T>> relations;
  MergedAggregationInput<T> merged;
  SegmentLayout segments;
  /// Layer output after activation, rows packed by destination type.
  Matrix<T> output;
};

/// Activations kept by forward() for the backward pass. The batch, semantic
/// graphs and features must outlive the cache.
template <typename T>
struct ForwardCache {
  const MiniBatch* batch = nullptr;
  const SemanticGraphSet* sgs = nullptr;
  const FeatureStore<T>* features = nullptr;
  AggregationPath path = AggregationPath::PerRelation;
  std::vector<LayerCache<T>> layers;
};

/// Runs every layer and returns one logit row per seed. `features` holds the
/// batch's outermost source vertices (collect_features of layers[0]).
template <typename T>
Matrix<T> forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                  const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                  ForwardCache<T>* cache = nullptr);

template <typename T>
Matrix<T> rgcn_forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                       const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                       ForwardCache<T>* cache = nullptr);

template <typename T>
Matrix<T> rgat_forward(const ModelParams<T>& params, const MiniBatch& batch, const SemanticGraphSet& sgs,
                       const FeatureStore<T>& features, AggregationPath path, DeviceQueue& device,
                       ForwardCache<T>* cache = nullptr);

/// Mean cross-entropy over rows; fills `grad` with d loss / d logits when given.
template <typename T>
T cross_entropy(MatrixRef<T> logits, std::span<const std::int32_t> labels, Matrix<T>* grad = nullptr);

/// Loss, analytic gradients for every parameter and one SGD update, from a
/// cached forward pass. Throws NumericError (leaving params untouched) on a
/// non-finite loss or gradient.
template <typename T>
T backward_and_step(TrainState<T>& state, const ForwardCache<T>& cache, MatrixRef<T> logits,
                    std::span<const std::int32_t> labels, DeviceQueue& device);

/// Writes `<prefix>.bin` (raw little-endian values) and `<prefix>.json`.
template <typename T>
void save_checkpoint(const TrainState<T>& state, const std::filesystem::path& prefix);
template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& prefix);

/// Labels for a target type: argmax of a seeded random projection of each
/// vertex's own features.
template <typename T>
LabelSet make_labels(const FeatureStore<T>& fs, TypeId target_type, std::uint32_t num_classes, std::uint64_t seed);

}  // namespace hetflow
