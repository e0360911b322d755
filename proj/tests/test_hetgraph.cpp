// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "hetflow/hetgraph.hpp"
#include "test_util.hpp"

using namespace hetflow;

namespace {

constexpr const char* kTiny =
    "HGRAPH v1\n"
    "# smallest graph\n"
    "VTYPE node 3 2\n"
    "REL link node node\n"
    "E 0 0 1\n"
    "E 0 1 2\n";

bool has_violation(const HeteroGraph& g, const std::string& name) {
  for (const auto& v : validate(g)) {
    if (v.invariant == name) return true;
  }
  return false;
}

}  // namespace

TEST(HetGraph, ParsesSmallestGraph) {
  const auto g = parse_graph(kTiny);
  EXPECT_EQ(g.num_types(), 1u);
  EXPECT_EQ(g.num_relations(), 1u);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.vertex_types[0].count, 3u);
  EXPECT_EQ(g.vertex_types[0].feature_dim, 2u);
  EXPECT_EQ(g.edge(1), (Edge{1, 2}));
  EXPECT_TRUE(validate(g).empty());
}

TEST(HetGraph, DanglingVertexReportsLine) {
  const std::string text = "HGRAPH v1\nVTYPE a 3 2\nREL r a a\nE 0 0 1\nE 0 3 0\n";
  try {
    parse_graph(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
    EXPECT_NE(std::string(e.what()).find("vertex id out of range"), std::string::npos);
  }
}

TEST(HetGraph, RejectsMalformedInput) {
  EXPECT_THROW(parse_graph("VTYPE a 1 1\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 0 1\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 2 1\nREL r a b\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 2 1\nREL r a a\nREL r a a\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 2 1\nREL r a a\nE 1 0 0\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 2 1\nREL r a a\nE 0 x 0\n"), ParseError);
  EXPECT_THROW(parse_graph("HGRAPH v1\nVTYPE a 2 1\nBOGUS\n"), ParseError);
}

TEST(HetGraph, ValidateNamesBrokenInvariants) {
  auto g = parse_graph(kTiny);
  EXPECT_TRUE(validate(g).empty());

  auto short_map = g;
  short_map.global_edge_type.pop_back();
  EXPECT_TRUE(has_violation(short_map, "edge count mismatch"));

  auto bad_type = make_graph({{0, "a", 2, 1}, {0, "b", 2, 1}, {0, "c", 2, 1}}, {{0, "r", 0, 99}}, {{}});
  EXPECT_TRUE(has_violation(bad_type, "relation dst type out of range"));

  auto dangling = g;
  dangling.edges[0][0].src = 7;
  EXPECT_TRUE(has_violation(dangling, "vertex id out of range"));
  EXPECT_THROW(require_valid(dangling), InvalidArgument);
}

TEST(HetGraph, SyntheticTrivialSpec) {
  SyntheticSpec spec{1, 1, {4}, 4, 2, 0.0, 7};
  const auto g = generate_synthetic(spec);
  EXPECT_EQ(g.num_edges(), 4u);
  for (const auto& e : g.edges[0]) {
    EXPECT_LT(e.src, 4u);
    EXPECT_LT(e.dst, 4u);
  }
  EXPECT_EQ(g, generate_synthetic(spec));
  EXPECT_THROW(generate_synthetic(SyntheticSpec{2, 1, {4, 0}, 4, 2, 0.0, 1}), InvalidArgument);
}

TEST(HetGraph, RelationsCycleOverTypePairs) {
  const auto g = generate_synthetic(SyntheticSpec{3, 11, {5, 6, 7}, 200, 4, 0.5, 3});
  for (RelationId r = 0; r < g.num_relations(); ++r) {
    const auto p = r % 9;
    EXPECT_EQ(g.relations[r].src_type, p % 3);
    EXPECT_EQ(g.relations[r].dst_type, p / 3);
  }
}

TEST(HetGraph, PresetsMatchPublishedTotals) {
  struct Row {
    const char* name;
    std::size_t vertices, edges, types, relations;
  };
  // node/edge/type/relation totals of the four RDF benchmarks
  const Row rows[] = {{"aifb", 7262, 48810, 7, 104}, {"mutag", 27163, 148100, 5, 50}};
  for (const auto& row : rows) {
    const auto p = find_preset(row.name);
    ASSERT_TRUE(p) << row.name;
    const auto g = generate_synthetic(p->spec);
    EXPECT_EQ(g.num_vertices(), row.vertices) << row.name;
    EXPECT_EQ(g.num_edges(), row.edges) << row.name;
    EXPECT_EQ(g.num_types(), row.types) << row.name;
    EXPECT_EQ(g.num_relations(), row.relations) << row.name;
    EXPECT_TRUE(validate(g).empty());
  }
  // the large ones are only checked at the spec level
  const auto bgs = find_preset("bgs");
  const auto am = find_preset("am");
  ASSERT_TRUE(bgs && am);
  auto sum = [](const std::vector<LocalId>& c) { return std::accumulate(c.begin(), c.end(), std::uint64_t{0}); };
  EXPECT_EQ(sum(bgs->spec.type_counts), 94806u);
  EXPECT_EQ(bgs->spec.num_edges, 672884u);
  EXPECT_EQ(bgs->spec.num_relations, 122u);
  EXPECT_EQ(sum(am->spec.type_counts), 1885136u);
  EXPECT_EQ(am->spec.num_edges, 5668682u);
  EXPECT_EQ(am->spec.num_types, 7u);
  EXPECT_EQ(am->spec.num_relations, 108u);
  EXPECT_FALSE(find_preset("cora"));
}

TEST(HetGraph, DownscaledPreset) {
  const auto p = find_preset("am", 10);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->spec.num_edges, 566868u);
  EXPECT_EQ(p->name, "am/10");
}

TEST(HetGraph, EdgeTypesPartitionEdgeLists) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = fx::random_graph(seed, 5, 30, 40, 600);
    std::vector<std::vector<Edge>> rebuilt(g.num_relations());
    for (EdgeId e = 0; e < g.num_edges(); ++e) rebuilt[g.global_edge_type[e]].push_back(g.edge(e));
    EXPECT_EQ(rebuilt, g.edges) << "seed " << seed;
  }
}

TEST(HetGraph, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "hetflow_graph_rt";
  std::filesystem::create_directories(dir);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = fx::random_graph(seed + 100, 6, 20, 50, 400);
    const auto path = dir / ("g" + std::to_string(seed) + ".txt");
    save_graph(g, path);
    EXPECT_EQ(load_graph(path), g);
    EXPECT_EQ(parse_graph(format_graph(g)), g);
  }
  std::filesystem::remove_all(dir);
}

TEST(HetGraph, EvenTypeCounts) {
  EXPECT_EQ(even_type_counts(10, 3), (std::vector<LocalId>{4, 3, 3}));
  EXPECT_EQ(even_type_counts(7262, 7).size(), 7u);
}
