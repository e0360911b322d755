// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/semantic_build.hpp"

namespace hetflow {

std::size_t SemanticLayer::num_edges() const noexcept {
  std::size_t n = 0;
  for (const auto& r : relations) n += r.size();
  return n;
}

std::size_t SemanticLayer::nonempty_relations() const noexcept {
  std::size_t n = 0;
  for (const auto& r : relations) n += r.empty() ? 0 : 1;
  return n;
}

namespace {

std::vector<RelationId> gather_edge_types(const LayerBlock& block, const HeteroGraph& g, std::size_t layer) {
  if (block.src.size() != block.edge_id.size() || block.dst.size() != block.edge_id.size()) {
    throw InvalidArgument("layer " + std::to_string(layer) + ": edge_index and edge_id lengths differ");
  }
  std::vector<RelationId> types(block.edge_id.size());
  for (std::size_t k = 0; k < block.edge_id.size(); ++k) {
    const EdgeId e = block.edge_id[k];
    if (e >= g.global_edge_type.size()) {
      throw InvalidArgument("layer " + std::to_string(layer) + ": edge id " + std::to_string(e) + " out of range (" + std::to_string(g.global_edge_type.size()) + " edges)");
    }
    types[k] = g.global_edge_type[e];
  }
  return types;
}

SemanticLayer empty_layer(const LayerBlock& block, const HeteroGraph& g) {
  SemanticLayer out;
  out.src_count = block.src_count();
  out.dst_count = block.dst_count;
  out.relations.resize(g.num_relations());
  for (RelationId r = 0; r < g.num_relations(); ++r) {
    out.relations[r].src_type = g.relations[r].src_type;
    out.relations[r].dst_type = g.relations[r].dst_type;
  }
  return out;
}

/// Fused compare + index-select for one relation: one pass over the types.
void select_relation(const LayerBlock& block, const std::vector<RelationId>& types, RelationId r,
                     RelationEdges& out) {
  std::size_t n = 0;
  for (const RelationId t : types) n += (t == r);
  out.src_index.reserve(n);
  out.dst_index.reserve(n);
  for (std::size_t k = 0; k < types.size(); ++k) {
    if (types[k] == r) {
      out.src_index.push_back(block.src[k]);
      out.dst_index.push_back(block.dst[k]);
    }
  }
}

}  // namespace

SemanticGraphSet select_edge_indices_serial(const MiniBatch& batch, const HeteroGraph& g) {
  SemanticGraphSet out;
  out.layers.reserve(batch.layers.size());
  for (std::size_t l = 0; l < batch.layers.size(); ++l) {
    const LayerBlock& block = batch.layers[l];
    const auto types = gather_edge_types(block, g, l);
    SemanticLayer layer = empty_layer(block, g);
    for (RelationId r = 0; r < g.num_relations(); ++r) select_relation(block, types, r, layer.relations[r]);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

SemanticGraphSet select_edge_indices_parallel(const MiniBatch& batch, const HeteroGraph& g, int workers) {
  if (workers < 1) throw InvalidArgument("select_edge_indices_parallel: workers must be >= 1");
  workers = effective_workers(workers);
  if (workers == 1) return select_edge_indices_serial(batch, g);

  SemanticGraphSet out;
  out.layers.reserve(batch.layers.size());
  const auto num_relations = static_cast<std::int64_t>(g.num_relations());
  for (std::size_t l = 0; l < batch.layers.size(); ++l) {
    const LayerBlock& block = batch.layers[l];
    const auto types = gather_edge_types(block, g, l);
    SemanticLayer layer = empty_layer(block, g);
    auto& slots = layer.relations;
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::int64_t r = 0; r < num_relations; ++r) {
      select_relation(block, types, static_cast<RelationId>(r), slots[r]);
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

SemanticGraphSet select_edge_indices_device(const MiniBatch& batch, const HeteroGraph& g, DeviceQueue& device) {
  if (!device.is_open()) throw DeviceClosed("select_edge_indices_device: device queue closed");
  SemanticGraphSet out;
  out.layers.reserve(batch.layers.size());
  for (std::size_t l = 0; l < batch.layers.size(); ++l) {
    const LayerBlock& block = batch.layers[l];
    const int layer_id = static_cast<int>(l);
    const std::size_t n = block.edge_id.size();

    KernelDesc gather{"index_select_edge_type", Stage::SemanticBuild, layer_id, -1,
                      n * sizeof(EdgeId) + n * sizeof(RelationId), n * sizeof(RelationId), std::nullopt};
    const auto types = device.submit(gather, [&] { return gather_edge_types(block, g, l); });

    SemanticLayer layer = empty_layer(block, g);
    for (RelationId r = 0; r < g.num_relations(); ++r) {
      KernelDesc compare{"compare", Stage::SemanticBuild, layer_id, static_cast<int>(r),
                         n * sizeof(RelationId), n, std::nullopt};
      const auto mask = device.submit(compare, [&] {
        std::vector<std::uint8_t> m(n);
        for (std::size_t k = 0; k < n; ++k) m[k] = types[k] == r;
        return m;
      });
      KernelDesc select{"index_select_edge_index", Stage::SemanticBuild, layer_id, static_cast<int>(r),
                        n + 2 * n * sizeof(LocalId), 0, std::nullopt};
      auto& rel = layer.relations[r];
      device.submit(select, [&] {
        for (std::size_t k = 0; k < n; ++k) {
          if (mask[k]) {
            rel.src_index.push_back(block.src[k]);
            rel.dst_index.push_back(block.dst[k]);
          }
        }
      });
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

}  // namespace hetflow
