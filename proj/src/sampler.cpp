// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace hetflow {

std::vector<LocalId> LayerBlock::src_count() const {
  std::vector<LocalId> out(vertex_map.size());
  for (std::size_t t = 0; t < vertex_map.size(); ++t) out[t] = static_cast<LocalId>(vertex_map[t].size());
  return out;
}

std::size_t MiniBatch::num_edges() const noexcept {
  std::size_t n = 0;
  for (const auto& b : layers) n += b.num_edges();
  return n;
}

NeighborSampler::NeighborSampler(const HeteroGraph& g)
    : g_(&g),
      in_offsets_(g.num_relations()),
      in_edges_(g.num_relations()),
      relations_into_(g.num_types()) {
  for (RelationId r = 0; r < g.num_relations(); ++r) {
    const auto& rel = g.relations[r];
    relations_into_[rel.dst_type].push_back(r);
    const LocalId n = g.vertex_types[rel.dst_type].count;
    auto& offsets = in_offsets_[r];
    offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const auto& e : g.edges[r]) ++offsets[e.dst + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    auto& positions = in_edges_[r];
    positions.resize(g.edges[r].size());
    std::vector<EdgeId> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t k = 0; k < g.edges[r].size(); ++k) {
      positions[fill[g.edges[r][k].dst]++] = static_cast<EdgeId>(k);
    }
  }
}

std::span<const EdgeId> NeighborSampler::in_edges(RelationId r, LocalId v) const {
  const auto& offsets = in_offsets_[r];
  return std::span<const EdgeId>(in_edges_[r]).subspan(offsets[v], offsets[v + 1] - offsets[v]);
}

namespace {

/// Floyd's algorithm: `count` distinct values from [0, n), returned sorted.
std::vector<std::size_t> choose_without_replacement(std::size_t n, std::size_t count,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::unordered_set<std::size_t> seen;
  const bool use_set = count > 32;
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    const bool dup = use_set ? seen.contains(t)
                             : std::find(picked.begin(), picked.end(), t) != picked.end();
    const std::size_t v = dup ? j : t;
    picked.push_back(v);
    if (use_set) seen.insert(v);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

MiniBatch NeighborSampler::sample(std::span<const SeedVertex> seeds, std::span<const int> fanout,
                                  std::uint64_t seed, const LabelSet* labels) const {
  const HeteroGraph& g = *g_;
  if (fanout.empty()) throw InvalidArgument("sample: fanout must name at least one layer");
  if (seeds.empty()) throw InvalidArgument("sample: seed list is empty");

  const std::size_t num_types = g.num_types();
  std::vector<std::vector<LocalId>> frontier(num_types);
  std::vector<std::unordered_map<LocalId, LocalId>> index(num_types);

  MiniBatch batch;
  batch.seeds.assign(seeds.begin(), seeds.end());
  batch.seed_position.reserve(seeds.size());
  for (const auto& s : seeds) {
    if (s.type >= num_types || s.local >= g.vertex_types[s.type].count) {
      throw InvalidArgument("invalid seed vertex (type " + std::to_string(s.type) + ", local " + std::to_string(s.local) + ")");
    }
    auto [it, inserted] = index[s.type].emplace(s.local, static_cast<LocalId>(frontier[s.type].size()));
    if (!inserted) {
      throw InvalidArgument("invalid seed vertex (type " + std::to_string(s.type) + ", local " + std::to_string(s.local) + "): duplicate seed");
    }
    frontier[s.type].push_back(s.local);
    batch.seed_position.push_back(it->second);
  }
  if (labels != nullptr) {
    batch.labels.reserve(seeds.size());
    for (const auto& s : seeds) {
      batch.labels.push_back(s.type == labels->type ? labels->values.at(s.local) : -1);
    }
  }

  std::mt19937_64 rng(seed);
  const std::size_t num_layers = fanout.size();
  batch.layers.resize(num_layers);
  for (std::size_t step = 0; step < num_layers; ++step) {
    const std::size_t l = num_layers - 1 - step;
    const int cap = fanout[l];
    LayerBlock& block = batch.layers[l];
    block.vertex_map = frontier;
    block.dst_count.resize(num_types);
    for (std::size_t t = 0; t < num_types; ++t) block.dst_count[t] = static_cast<LocalId>(frontier[t].size());

    for (TypeId t = 0; t < num_types; ++t) {
      for (LocalId i = 0; i < block.dst_count[t]; ++i) {
        const LocalId v = block.vertex_map[t][i];
        for (const RelationId r : relations_into_[t]) {
          const auto candidates = in_edges(r, v);
          if (candidates.empty()) continue;
          const TypeId src_type = g.relations[r].src_type;
          auto take = [&](EdgeId k) {
            const LocalId u = g.edges[r][k].src;
            auto [it, inserted] = index[src_type].emplace(u, static_cast<LocalId>(block.vertex_map[src_type].size()));
            if (inserted) block.vertex_map[src_type].push_back(u);
            block.src.push_back(it->second);
            block.dst.push_back(i);
            block.edge_id.push_back(g.global_edge_id(r, k));
          };
          if (cap < 0 || candidates.size() <= static_cast<std::size_t>(cap)) {
            for (const EdgeId k : candidates) take(k);
          } else {
            for (const std::size_t pick : choose_without_replacement(candidates.size(), static_cast<std::size_t>(cap), rng)) {
              take(candidates[pick]);
            }
          }
        }
      }
    }
    frontier = block.vertex_map;
  }
  return batch;
}

std::uint64_t batch_seed(std::uint64_t epoch_seed, std::uint64_t batch_index) {
  return mix_seed(epoch_seed, batch_index + 1);
}

BatchIterator::BatchIterator(const NeighborSampler& sampler, TypeId target_type, std::size_t batch_size,
                             std::vector<int> fanout, std::uint64_t epoch_seed, const LabelSet* labels)
    : BatchIterator(sampler, target_type,
                    [&] {
                      if (target_type >= sampler.graph().num_types()) {
                        throw InvalidArgument("batch iterator: target type out of range");
                      }
                      std::vector<LocalId> all(sampler.graph().vertex_types[target_type].count);
                      std::iota(all.begin(), all.end(), LocalId{0});
                      return all;
                    }(),
                    batch_size, std::move(fanout), epoch_seed, labels) {}

BatchIterator::BatchIterator(const NeighborSampler& sampler, TypeId target_type, std::vector<LocalId> targets,
                             std::size_t batch_size, std::vector<int> fanout, std::uint64_t epoch_seed,
                             const LabelSet* labels)
    : sampler_(&sampler),
      target_type_(target_type),
      order_(std::move(targets)),
      batch_size_(batch_size),
      fanout_(std::move(fanout)),
      epoch_seed_(epoch_seed),
      labels_(labels) {
  if (batch_size_ == 0) throw InvalidArgument("batch iterator: batch_size must be >= 1");
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchIterator::num_batches() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<SeedVertex> BatchIterator::seeds(std::size_t batch) const {
  const std::size_t begin = batch * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  std::vector<SeedVertex> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back({target_type_, order_[i]});
  return out;
}

MiniBatch BatchIterator::batch(std::size_t batch) const {
  const auto s = seeds(batch);
  MiniBatch mb = sampler_->sample(s, fanout_, batch_seed(epoch_seed_, batch), labels_);
  mb.index = batch;
  return mb;
}

std::optional<MiniBatch> BatchIterator::next() {
  if (cursor_ >= num_batches()) return std::nullopt;
  return batch(cursor_++);
}

}  // namespace hetflow
