// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetflow/common.hpp"

namespace hetflow {

struct VertexType {
  TypeId id = 0;
  std::string name;
  LocalId count = 0;
  std::uint32_t feature_dim = 0;

  bool operator==(const VertexType&) const = default;
};

struct Relation {
  RelationId id = 0;
  std::string name;
  TypeId src_type = 0;
  TypeId dst_type = 0;

  bool operator==(const Relation&) const = default;
};

/// Endpoints in per-type local ids.
struct Edge {
  LocalId src = 0;
  LocalId dst = 0;

  bool operator==(const Edge&) const = default;
};

/// Heterogeneous graph topology.
///
/// Vertices are addressed as (type, local id). Edges are stored per relation;
/// global edge ids are relation-major: relation r owns the dense range
/// [relation_offset[r], relation_offset[r + 1]). The struct is a plain data
/// model so that validate() can diagnose inconsistent instances; build
/// well-formed graphs with make_graph().
struct HeteroGraph {
  std::vector<VertexType> vertex_types;
  std::vector<Relation> relations;
  std::vector<std::vector<Edge>> edges;
  std::vector<RelationId> global_edge_type;
  std::vector<EdgeId> relation_offset;

  std::size_t num_types() const noexcept { return vertex_types.size(); }
  std::size_t num_relations() const noexcept { return relations.size(); }
  std::size_t num_edges() const noexcept { return global_edge_type.size(); }
  std::size_t num_vertices() const noexcept;
  std::uint32_t max_feature_dim() const noexcept;

  /// Global id of the k-th edge of relation r.
  EdgeId global_edge_id(RelationId r, std::size_t k) const {
    return relation_offset[r] + static_cast<EdgeId>(k);
  }
  const Edge& edge(EdgeId e) const {
    const RelationId r = global_edge_type[e];
    return edges[r][e - relation_offset[r]];
  }

  std::optional<TypeId> find_type(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  bool operator==(const HeteroGraph&) const = default;
};

/// Assigns dense ids and relation-major global edge ids. Does not validate.
HeteroGraph make_graph(std::vector<VertexType> types, std::vector<Relation> relations,
                       std::vector<std::vector<Edge>> edges);

struct Violation {
  std::string invariant;
  std::string detail;
};

/// Empty iff all data-model invariants hold.
std::vector<Violation> validate(const HeteroGraph& g);

/// Throws InvalidArgument listing the first violation, if any.
void require_valid(const HeteroGraph& g);

/// Reads the line-oriented `HGRAPH v1` edge-list format.
HeteroGraph load_graph(const std::filesystem::path& path);
HeteroGraph parse_graph(std::string_view text);
void save_graph(const HeteroGraph& g, const std::filesystem::path& path);
std::string format_graph(const HeteroGraph& g);

struct SyntheticSpec {
  std::uint32_t num_types = 1;
  std::uint32_t num_relations = 1;
  std::vector<LocalId> type_counts;
  std::uint64_t num_edges = 1;
  std::uint32_t feature_dim = 16;
  /// Power-law exponent for endpoint popularity; 0 draws endpoints uniformly.
  double skew = 0.0;
  std::uint64_t seed = 0;
};

/// Deterministic graph for a given spec. Relation r connects the type pair
/// r mod T^2 (src = p mod T, dst = p / T); edges are split evenly across
/// relations and endpoints follow a rank^-skew popularity law per type.
HeteroGraph generate_synthetic(const SyntheticSpec& spec);

/// Named synthetic stand-in for one of the benchmark datasets.
struct DatasetPreset {
  std::string name;
  SyntheticSpec spec;
  TypeId target_type = 0;
  /// Size of the labeled training subset of the target type.
  std::uint32_t labeled = 0;
};

/// `aifb`, `bgs`, `mutag`, `am`; `downscale` divides vertex and edge totals.
std::optional<DatasetPreset> find_preset(std::string_view name, std::uint32_t downscale = 1);

/// Splits `total` vertices across `types` as evenly as possible.
std::vector<LocalId> even_type_counts(std::uint64_t total, std::uint32_t types);

}  // namespace hetflow
