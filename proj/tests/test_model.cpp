// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <gtest/gtest.h>

#include "hetflow/executor.hpp"
#include "hetflow/model.hpp"
#include "test_util.hpp"

using namespace hetflow;
using fx::cast_params;
using fx::cast_store;

namespace {

struct Fixture {
  HeteroGraph g;
  FeatureStore<double> fs;
  LabelSet labels;
};

Fixture small_fixture(std::uint64_t seed, std::uint32_t types = 3, std::uint32_t relations = 5, std::uint32_t dim = 4,
                      std::uint32_t classes = 3) {
  Fixture f;
  std::vector<LocalId> counts;
  for (std::uint32_t t = 0; t < types; ++t) counts.push_back(12 + static_cast<LocalId>(t));
  f.g = generate_synthetic(SyntheticSpec{types, relations, counts, 160, dim, 0.3, seed});
  f.fs = random_features<double>(f.g, seed, Layout::TypeMajor);
  f.labels = make_labels(f.fs, 0, classes, seed);
  return f;
}

std::vector<SeedVertex> first_seeds(TypeId t, LocalId n) {
  std::vector<SeedVertex> s;
  for (LocalId i = 0; i < n; ++i) s.push_back({t, i});
  return s;
}

}  // namespace

TEST(Model, IdentityProjectionGivesNeighborMean) {
  const auto g = generate_synthetic(SyntheticSpec{1, 1, {20}, 80, 3, 0.0, 3});
  const auto fs = random_features<double>(g, 1, Layout::TypeMajor);
  auto mc = fx::model_config(g, ModelKind::RGCN, 1, 3, 8, 3);
  auto params = ModelParams<double>::init(mc, 1);
  auto& w = params.tensors[params.weight(0, 0)];
  w.fill(0);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1;
  params.tensors[params.self(0, 0)].fill(0);
  const auto seeds = first_seeds(0, 6);
  const auto p = fx::prepare(g, fs, seeds, {kAllNeighbors}, 4);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  for (const auto path : {AggregationPath::PerRelation, AggregationPath::Merged}) {
    const auto logits = forward(params, p.batch, p.sgs, p.features, path, dev);
    ASSERT_EQ(logits.rows(), seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      std::vector<double> want(3, 0.0);
      std::size_t deg = 0;
      for (const auto& e : g.edges[0]) {
        if (e.dst != seeds[i].local) continue;
        ++deg;
        for (std::size_t c = 0; c < 3; ++c) want[c] += fs.lookup(0, e.src)[c];
      }
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(logits(i, c), deg ? want[c] / static_cast<double>(deg) : 0.0, 1e-12);
      }
    }
  }
}

TEST(Model, IsolatedSeedWithZeroSelfWeight) {
  // vertex 0 has no in-edges
  const auto g = make_graph({{0, "v", 3, 2}}, {{0, "r", 0, 0}}, {{{0, 1}, {2, 1}}});
  const auto fs = random_features<double>(g, 1, Layout::TypeMajor);
  auto params = ModelParams<double>::init(fx::model_config(g, ModelKind::RGCN, 1, 2, 4, 2), 3);
  params.tensors[params.self(0, 0)].fill(0);
  const SeedVertex seeds[] = {{0, 0}};
  const auto p = fx::prepare(g, fs, seeds, {5}, 1);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  const auto logits = forward(params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev);
  EXPECT_EQ(logits(0, 0), 0.0);
  EXPECT_EQ(logits(0, 1), 0.0);
}

TEST(Model, PathsAgree) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto f = small_fixture(seed);
    for (const auto kind : {ModelKind::RGCN, ModelKind::RGAT}) {
      const auto mc = fx::model_config(f.g, kind, 2, 4, 6, 3);
      const auto params = ModelParams<double>::init(mc, seed);
      const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 5), {4, 4}, seed);
      auto trace = fx::new_trace();
      DeviceQueue dev("dev", Nanos(0), trace);
      const auto a = forward(params, p.batch, p.sgs, p.features, AggregationPath::PerRelation, dev);
      const auto b = forward(params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev);
      EXPECT_LE(fx::max_scaled_err(b, a), 1e-12);

      const auto fs32 = cast_store<float>(p.features);
      const auto p32 = cast_params<float>(params);
      const auto a32 = forward(p32, p.batch, p.sgs, fs32, AggregationPath::PerRelation, dev);
      const auto b32 = forward(p32, p.batch, p.sgs, fs32, AggregationPath::Merged, dev);
      EXPECT_LE(fx::max_scaled_err(b32, a32), 1e-5);
    }
  }
}

TEST(Model, KernelTrace) {
  const auto f = small_fixture(2);
  const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 5), {4, 4}, 1);
  const auto params = ModelParams<double>::init(fx::model_config(f.g, ModelKind::RGCN, 2, 4, 6, 3), 1);
  for (const auto path : {AggregationPath::PerRelation, AggregationPath::Merged}) {
    auto trace = fx::new_trace();
    DeviceQueue dev("dev", Nanos(0), trace);
    forward(params, p.batch, p.sgs, p.features, path, dev);
    std::size_t matmuls = 0, nonempty = 0, scatter = 0, reduce = 0;
    for (const auto& r : trace->records()) {
      matmuls += r.name == "matmul";
      scatter += r.name == "scatter" || r.name == "gather";
      reduce += r.name == "segment_reduce";
    }
    for (const auto& l : p.sgs.layers) nonempty += l.nonempty_relations();
    EXPECT_EQ(matmuls, nonempty);
    if (path == AggregationPath::PerRelation) {
      EXPECT_EQ(scatter, 2 * nonempty);
      EXPECT_EQ(reduce, 0u);
    } else {
      EXPECT_EQ(scatter, 0u);
      EXPECT_EQ(reduce, p.sgs.layers.size());
    }
  }
}

TEST(Model, AttentionNormalized) {
  const auto f = small_fixture(5);
  const auto params = ModelParams<double>::init(fx::model_config(f.g, ModelKind::RGAT, 2, 4, 6, 3), 2);
  const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 6), {5, 5}, 2);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  for (const auto path : {AggregationPath::PerRelation, AggregationPath::Merged}) {
    ForwardCache<double> cache;
    forward(params, p.batch, p.sgs, p.features, path, dev, &cache);
    for (std::size_t l = 0; l < cache.layers.size(); ++l) {
      const auto& sl = p.sgs.layers[l];
      for (std::size_t r = 0; r < sl.relations.size(); ++r) {
        const auto& rel = sl.relations[r];
        const auto& alpha = cache.layers[l].relations[r].weights;
        ASSERT_EQ(alpha.size(), rel.size());
        std::map<LocalId, double> total;
        std::map<LocalId, int> deg;
        for (std::size_t k = 0; k < rel.size(); ++k) {
          total[rel.dst_index[k]] += alpha[k];
          ++deg[rel.dst_index[k]];
        }
        for (const auto& [d, s] : total) EXPECT_NEAR(s, 1.0, 1e-6);
        for (std::size_t k = 0; k < rel.size(); ++k) {
          if (deg[rel.dst_index[k]] == 1) EXPECT_EQ(alpha[k], 1.0);
        }
      }
    }
  }
}

TEST(Model, UniformInputsGiveUniformAttention) {
  const auto g = generate_synthetic(SyntheticSpec{2, 3, {15, 15}, 120, 3, 0.0, 8});
  std::vector<Matrix<double>> blocks{Matrix<double>(15, 3, 0.5), Matrix<double>(15, 3, 0.5)};
  const auto fs = FeatureStore<double>::type_major(blocks);
  auto params = ModelParams<double>::init(fx::model_config(g, ModelKind::RGAT, 1, 3, 4, 4), 1);
  for (auto& t : params.tensors) t.fill(0.1);
  const auto p = fx::prepare(g, fs, first_seeds(0, 8), {kAllNeighbors}, 1);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  ForwardCache<double> cache;
  forward(params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev, &cache);
  for (std::size_t r = 0; r < g.num_relations(); ++r) {
    const auto& rel = p.sgs.layers[0].relations[r];
    std::map<LocalId, int> deg;
    for (const auto d : rel.dst_index) ++deg[d];
    for (std::size_t k = 0; k < rel.size(); ++k) {
      EXPECT_NEAR(cache.layers[0].relations[r].weights[k], 1.0 / deg[rel.dst_index[k]], 1e-15);
    }
  }
}

TEST(Model, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = small_fixture(seed + 20);
    for (const auto kind : {ModelKind::RGCN, ModelKind::RGAT}) {
      const auto params = ModelParams<double>::init(fx::model_config(f.g, kind, 2, 4, 5, 3), seed);
      const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 4), {3, 3}, seed, &f.labels);
      ASSERT_LE(p.batch.num_edges(), 200u);
      for (const auto path : {AggregationPath::PerRelation, AggregationPath::Merged}) {
        const auto gc = fx::check_model_gradients(f.g, p, params, path);
        EXPECT_GT(gc.checked, 100u);
        EXPECT_LE(gc.worst, 1e-4) << model_name(kind) << " " << path_name(path) << " seed " << seed;
      }
    }
  }
}

TEST(Model, SingleLayerClosedFormGradient) {
  const auto f = small_fixture(31, 2, 3, 4, 3);
  auto params = ModelParams<double>::init(fx::model_config(f.g, ModelKind::RGCN, 1, 4, 4, 3), 9);
  const SeedVertex seeds[] = {{0, 3}};
  const auto p = fx::prepare(f.g, f.fs, seeds, {kAllNeighbors}, 1, &f.labels);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  TrainState<double> st{params, ModelParams<double>::zeros_like(params), 0, 0.0, 0};
  ForwardCache<double> cache;
  const auto logits = forward(st.params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev, &cache);
  backward_and_step<double>(st, cache, logits, p.batch.labels, dev);

  // dL/dlogits = softmax - onehot
  std::vector<double> delta(3);
  double zmax = -INFINITY, zsum = 0;
  for (std::size_t c = 0; c < 3; ++c) zmax = std::max(zmax, logits(0, c));
  for (std::size_t c = 0; c < 3; ++c) zsum += std::exp(logits(0, c) - zmax);
  for (std::size_t c = 0; c < 3; ++c) delta[c] = std::exp(logits(0, c) - zmax) / zsum;
  delta[static_cast<std::size_t>(f.labels.values[3])] -= 1;

  const auto x = f.fs.lookup(0, 3);
  const auto& gs = st.grads.tensors[params.self(0, 0)];
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(gs(i, c), x[i] * delta[c], 1e-12);
  }
  for (RelationId r = 0; r < f.g.num_relations(); ++r) {
    if (f.g.relations[r].dst_type != 0) continue;
    std::vector<double> mean(4, 0.0);
    std::size_t deg = 0;
    for (const auto& e : f.g.edges[r]) {
      if (e.dst != 3) continue;
      ++deg;
      for (std::size_t i = 0; i < 4; ++i) mean[i] += f.fs.lookup(f.g.relations[r].src_type, e.src)[i];
    }
    const auto& gw = st.grads.tensors[params.weight(0, r)];
    const auto& gb = st.grads.tensors[params.bias(0, r)];
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(gw(i, c), deg ? mean[i] / deg * delta[c] : 0.0, 1e-12);
    }
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(gb(0, c), deg ? delta[c] : 0.0, 1e-12);
  }
}

TEST(Model, ZeroLearningRateKeepsParams) {
  const auto f = small_fixture(4);
  auto st = TrainState<double>::create(fx::model_config(f.g, ModelKind::RGAT, 2, 4, 5, 3), 0.0, 1);
  const auto before = st.params.tensors;
  const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 4), {3, 3}, 1, &f.labels);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  ForwardCache<double> cache;
  const auto logits = forward(st.params, p.batch, p.sgs, p.features, AggregationPath::PerRelation, dev, &cache);
  const double loss = backward_and_step<double>(st, cache, logits, p.batch.labels, dev);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(st.params.tensors, before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Model, NonFiniteAbortsStep) {
  const auto f = small_fixture(4);
  auto st = TrainState<double>::create(fx::model_config(f.g, ModelKind::RGCN, 2, 4, 5, 3), 0.1, 1);
  st.params.tensors[st.params.self(1, 0)](0, 0) = NAN;
  const auto before = st.params.tensors;
  const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 4), {3, 3}, 1, &f.labels);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  ForwardCache<double> cache;
  const auto logits = forward(st.params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev, &cache);
  EXPECT_THROW(backward_and_step<double>(st, cache, logits, p.batch.labels, dev), NumericError);
  EXPECT_EQ(st.step, 0u);
  for (std::size_t t = 0; t < before.size(); ++t) {
    for (std::size_t i = 0; i < before[t].size(); ++i) {
      const double a = before[t].values()[i], b = st.params.tensors[t].values()[i];
      EXPECT_TRUE(a == b || (std::isnan(a) && std::isnan(b)));
    }
  }
}

TEST(Model, DimensionMismatch) {
  const auto f = small_fixture(4);
  const auto params = ModelParams<double>::init(fx::model_config(f.g, ModelKind::RGCN, 2, 7, 5, 3), 1);
  const auto p = fx::prepare(f.g, f.fs, first_seeds(0, 4), {3, 3}, 1);
  auto trace = fx::new_trace();
  DeviceQueue dev("dev", Nanos(0), trace);
  EXPECT_THROW(forward(params, p.batch, p.sgs, p.features, AggregationPath::Merged, dev), InvalidArgument);
  const auto p1 = fx::prepare(f.g, f.fs, first_seeds(0, 4), {3}, 1);
  const auto ok = ModelParams<double>::init(fx::model_config(f.g, ModelKind::RGCN, 2, 4, 5, 3), 1);
  EXPECT_THROW(forward(ok, p1.batch, p1.sgs, p1.features, AggregationPath::Merged, dev), InvalidArgument);
  EXPECT_THROW(rgat_forward(ok, p.batch, p.sgs, p.features, AggregationPath::Merged, dev), InvalidArgument);
}

TEST(Model, ToyTaskLossDrops) {
  const auto g = generate_synthetic(SyntheticSpec{2, 4, {60, 40}, 600, 6, 0.3, 12});
  const auto fs = random_features<double>(g, 12, Layout::IndexMajor);
  const auto labels = make_labels(reorganize(fs), 0, 3, 12);
  TrainerConfig tc;
  tc.layers = 1;
  tc.hidden = 8;
  tc.num_classes = 3;
  tc.batch_size = 60;
  tc.fanout = {5};
  tc.plan = ExecutionPlan::for_mode(Mode::Full);
  tc.plan.pipelined = false;
  tc.launch_overhead = Nanos(0);
  tc.learning_rate = 0.5;
  tc.seed = 3;
  std::vector<LocalId> targets(60);
  std::iota(targets.begin(), targets.end(), 0u);
  Trainer<double> trainer(g, fs, labels, targets, tc);
  const double first = trainer.run_epoch(0).loss;
  double last = first;
  for (std::size_t e = 1; e < 50; ++e) last = trainer.run_epoch(e).loss;
  EXPECT_LT(last, 0.25 * first);
}

TEST(Model, CheckpointRoundTrip) {
  auto st = TrainState<float>::create(
      ModelConfig{ModelKind::RGAT, 2, 5, 7, 3, 2, 4, 0.2}, 0.05, 11);
  st.step = 42;
  const auto prefix = std::filesystem::temp_directory_path() / "hetflow_ckpt";
  save_checkpoint(st, prefix);
  const auto back = load_checkpoint<float>(prefix);
  EXPECT_EQ(back.params.config, st.params.config);
  EXPECT_EQ(back.params.tensors, st.params.tensors);
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.seed, 11u);
  EXPECT_THROW(load_checkpoint<double>(prefix), Error);
  std::filesystem::remove(std::filesystem::path(prefix.string() + ".bin"));
  std::filesystem::remove(std::filesystem::path(prefix.string() + ".json"));
}

TEST(Model, InitBounds) {
  const ModelConfig mc{ModelKind::RGAT, 2, 10, 6, 3, 2, 3, 0.2};
  const auto p = ModelParams<double>::init(mc, 5);
  EXPECT_EQ(p.tensors.size(), 2 * (4 * 3 + 2));
  const double bound = std::sqrt(6.0 / (10 + 6));
  for (const auto v : p.tensors[p.weight(0, 1)].values()) EXPECT_LE(std::abs(v), bound);
  for (const auto v : p.tensors[p.bias(1, 2)].values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.tensors[p.weight(1, 0)].rows(), 6u);
  EXPECT_EQ(p.tensors[p.weight(1, 0)].cols(), 3u);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(ModelParams<double>::init(mc, 5).tensors, p.tensors);
}

TEST(Model, CrossEntropyGradient) {
  Matrix<double> z(2, 3);
  z(0, 0) = 1;
  z(1, 2) = -2;
  const std::int32_t y[] = {0, 1};
  Matrix<double> g;
  const double loss = cross_entropy<double>(z, y, &g);
  const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 2));
  const double l1 = -std::log(1.0 / (2 + std::exp(-2.0)));
  EXPECT_NEAR(loss, (l0 + l1) / 2, 1e-14);
  EXPECT_NEAR(g(0, 0), (std::exp(1.0) / (std::exp(1.0) + 2) - 1) / 2, 1e-14);
}
