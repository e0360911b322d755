// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetflow/hetgraph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace hetflow {

std::size_t HeteroGraph::num_vertices() const noexcept {
  std::size_t n = 0;
  for (const auto& t : vertex_types) n += t.count;
  return n;
}

std::uint32_t HeteroGraph::max_feature_dim() const noexcept {
  std::uint32_t d = 0;
  for (const auto& t : vertex_types) d = std::max(d, t.feature_dim);
  return d;
}

std::optional<TypeId> HeteroGraph::find_type(std::string_view name) const {
  for (const auto& t : vertex_types) {
    if (t.name == name) return t.id;
  }
  return std::nullopt;
}

std::optional<RelationId> HeteroGraph::find_relation(std::string_view name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r.id;
  }
  return std::nullopt;
}

HeteroGraph make_graph(std::vector<VertexType> types, std::vector<Relation> relations,
                       std::vector<std::vector<Edge>> edges) {
  HeteroGraph g;
  for (std::size_t i = 0; i < types.size(); ++i) types[i].id = static_cast<TypeId>(i);
  for (std::size_t i = 0; i < relations.size(); ++i) relations[i].id = static_cast<RelationId>(i);
  edges.resize(relations.size());
  g.vertex_types = std::move(types);
  g.relations = std::move(relations);
  g.edges = std::move(edges);
  g.relation_offset.resize(g.relations.size() + 1, 0);
  for (std::size_t r = 0; r < g.relations.size(); ++r) {
    g.relation_offset[r + 1] = g.relation_offset[r] + static_cast<EdgeId>(g.edges[r].size());
  }
  g.global_edge_type.reserve(g.relation_offset.back());
  for (std::size_t r = 0; r < g.relations.size(); ++r) {
    g.global_edge_type.insert(g.global_edge_type.end(), g.edges[r].size(),
                              static_cast<RelationId>(r));
  }
  return g;
}

std::vector<Violation> validate(const HeteroGraph& g) {
  std::vector<Violation> out;
  auto add = [&out](std::string invariant, std::string detail) {
    out.push_back({std::move(invariant), std::move(detail)});
  };
  const std::size_t num_types = g.vertex_types.size();

  std::set<std::string> type_names;
  for (std::size_t i = 0; i < num_types; ++i) {
    const auto& t = g.vertex_types[i];
    if (t.id != i) add("vertex type id not dense", "type '" + t.name + "' at position " + std::to_string(i) + " has id " + std::to_string(t.id));
    if (t.count == 0) add("vertex type count invalid", "type '" + t.name + "' has zero vertices");
    if (t.feature_dim == 0) add("vertex type feature_dim invalid", "type '" + t.name + "' has zero feature width");
    if (!type_names.insert(t.name).second) add("duplicate vertex type name", t.name);
  }

  std::set<std::string> rel_names;
  for (std::size_t i = 0; i < g.relations.size(); ++i) {
    const auto& r = g.relations[i];
    if (r.id != i) add("relation id not dense", "relation '" + r.name + "' at position " + std::to_string(i) + " has id " + std::to_string(r.id));
    if (r.src_type >= num_types) add("relation src type out of range", "relation '" + r.name + "' src_type " + std::to_string(r.src_type) + " >= " + std::to_string(num_types));
    if (r.dst_type >= num_types) add("relation dst type out of range", "relation '" + r.name + "' dst_type " + std::to_string(r.dst_type) + " >= " + std::to_string(num_types));
    if (!rel_names.insert(r.name).second) add("duplicate relation name", r.name);
  }

  if (g.edges.size() != g.relations.size()) {
    add("edge list count mismatch", std::to_string(g.edges.size()) + " edge lists for " + std::to_string(g.relations.size()) + " relations");
  }

  std::size_t total = 0;
  const std::size_t lists = std::min(g.edges.size(), g.relations.size());
  for (std::size_t r = 0; r < lists; ++r) {
    total += g.edges[r].size();
    const auto& rel = g.relations[r];
    if (rel.src_type >= num_types || rel.dst_type >= num_types) continue;
    const LocalId src_count = g.vertex_types[rel.src_type].count;
    const LocalId dst_count = g.vertex_types[rel.dst_type].count;
    std::size_t bad = 0;
    for (std::size_t k = 0; k < g.edges[r].size(); ++k) {
      const auto& e = g.edges[r][k];
      if (e.src >= src_count || e.dst >= dst_count) {
        if (bad++ == 0) {
          add("vertex id out of range", "relation '" + rel.name + "' edge " + std::to_string(k) + " (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") exceeds counts (" + std::to_string(src_count) + "," + std::to_string(dst_count) + ")");
        }
      }
    }
    if (bad > 1) out.back().detail += " and " + std::to_string(bad - 1) + " more";
  }
  for (std::size_t r = lists; r < g.edges.size(); ++r) total += g.edges[r].size();

  if (g.global_edge_type.size() != total) {
    add("edge count mismatch", "global_edge_type has " + std::to_string(g.global_edge_type.size()) + " entries, relations hold " + std::to_string(total) + " edges");
    return out;
  }
  if (g.relation_offset.size() != lists + 1 || (!g.relation_offset.empty() && g.relation_offset[0] != 0)) {
    add("relation offset mismatch", "relation_offset has " + std::to_string(g.relation_offset.size()) + " entries");
    return out;
  }
  for (std::size_t r = 0; r < lists; ++r) {
    if (g.relation_offset[r + 1] != g.relation_offset[r] + g.edges[r].size()) {
      add("relation offset mismatch", "relation " + std::to_string(r) + " range does not match its edge count");
      return out;
    }
    for (EdgeId e = g.relation_offset[r]; e < g.relation_offset[r + 1]; ++e) {
      if (g.global_edge_type[e] != r) {
        add("edge type mismatch", "global edge " + std::to_string(e) + " maps to relation " + std::to_string(g.global_edge_type[e]) + ", expected " + std::to_string(r));
        break;
      }
    }
  }
  return out;
}

void require_valid(const HeteroGraph& g) {
  const auto violations = validate(g);
  if (!violations.empty()) {
    throw InvalidArgument(violations.front().invariant + ": " + violations.front().detail);
  }
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::uint64_t parse_uint(std::string_view tok, std::size_t line, const char* field) {
  std::uint64_t v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError(line, std::string("expected non-negative integer for ") + field + ", got '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

HeteroGraph parse_graph(std::string_view text) {
  enum class Section { Header, Types, Relations, Edges };
  Section section = Section::Header;
  std::vector<VertexType> types;
  std::vector<Relation> relations;
  std::vector<std::vector<Edge>> edges;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const std::string_view kind = tokens[0];

    if (section == Section::Header) {
      if (tokens.size() != 2 || kind != "HGRAPH" || tokens[1] != "v1") {
        throw ParseError(line_no, "expected header 'HGRAPH v1'");
      }
      section = Section::Types;
    } else if (kind == "VTYPE") {
      if (section != Section::Types) throw ParseError(line_no, "VTYPE after REL or E");
      if (tokens.size() != 4) throw ParseError(line_no, "VTYPE expects <name> <count> <feature_dim>");
      VertexType t;
      t.id = static_cast<TypeId>(types.size());
      t.name = std::string(tokens[1]);
      t.count = static_cast<LocalId>(parse_uint(tokens[2], line_no, "count"));
      t.feature_dim = static_cast<std::uint32_t>(parse_uint(tokens[3], line_no, "feature_dim"));
      if (t.count == 0) throw ParseError(line_no, "vertex type '" + t.name + "' must have count >= 1");
      if (t.feature_dim == 0) throw ParseError(line_no, "vertex type '" + t.name + "' must have feature_dim >= 1");
      for (const auto& other : types) {
        if (other.name == t.name) throw ParseError(line_no, "duplicate vertex type name '" + t.name + "'");
      }
      types.push_back(std::move(t));
    } else if (kind == "REL") {
      if (section == Section::Edges) throw ParseError(line_no, "REL after E");
      section = Section::Relations;
      if (tokens.size() != 4) throw ParseError(line_no, "REL expects <name> <src_type_name> <dst_type_name>");
      Relation r;
      r.id = static_cast<RelationId>(relations.size());
      r.name = std::string(tokens[1]);
      auto lookup = [&](std::string_view name) {
        for (const auto& t : types) {
          if (t.name == name) return t.id;
        }
        throw ParseError(line_no, "unknown vertex type '" + std::string(name) + "'");
      };
      r.src_type = lookup(tokens[2]);
      r.dst_type = lookup(tokens[3]);
      for (const auto& other : relations) {
        if (other.name == r.name) throw ParseError(line_no, "duplicate relation name '" + r.name + "'");
      }
      relations.push_back(std::move(r));
      edges.emplace_back();
    } else if (kind == "E") {
      section = Section::Edges;
      if (tokens.size() != 4) throw ParseError(line_no, "E expects <rel_id> <src_local_id> <dst_local_id>");
      const auto rel = parse_uint(tokens[1], line_no, "rel_id");
      if (rel >= relations.size()) {
        throw ParseError(line_no, "relation id out of range: " + std::to_string(rel) + " >= " + std::to_string(relations.size()));
      }
      const auto src = parse_uint(tokens[2], line_no, "src_local_id");
      const auto dst = parse_uint(tokens[3], line_no, "dst_local_id");
      const auto& r = relations[rel];
      if (src >= types[r.src_type].count) {
        throw ParseError(line_no, "vertex id out of range: src " + std::to_string(src) + " >= count " + std::to_string(types[r.src_type].count) + " of type '" + types[r.src_type].name + "'");
      }
      if (dst >= types[r.dst_type].count) {
        throw ParseError(line_no, "vertex id out of range: dst " + std::to_string(dst) + " >= count " + std::to_string(types[r.dst_type].count) + " of type '" + types[r.dst_type].name + "'");
      }
      edges[rel].push_back({static_cast<LocalId>(src), static_cast<LocalId>(dst)});
    } else {
      throw ParseError(line_no, "unknown record '" + std::string(kind) + "'");
    }
    if (nl == text.size()) break;
  }
  if (section == Section::Header) throw ParseError(line_no, "missing header 'HGRAPH v1'");
  if (types.empty()) throw ParseError(line_no, "no vertex types declared");

  HeteroGraph g = make_graph(std::move(types), std::move(relations), std::move(edges));
  require_valid(g);
  return g;
}

HeteroGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open graph file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph(buf.str());
}

std::string format_graph(const HeteroGraph& g) {
  std::string out = "HGRAPH v1\n";
  for (const auto& t : g.vertex_types) {
    out += "VTYPE " + t.name + " " + std::to_string(t.count) + " " + std::to_string(t.feature_dim) + "\n";
  }
  for (const auto& r : g.relations) {
    out += "REL " + r.name + " " + g.vertex_types[r.src_type].name + " " + g.vertex_types[r.dst_type].name + "\n";
  }
  for (std::size_t r = 0; r < g.edges.size(); ++r) {
    const std::string prefix = "E " + std::to_string(r) + " ";
    for (const auto& e : g.edges[r]) {
      out += prefix;
      out += std::to_string(e.src);
      out += ' ';
      out += std::to_string(e.dst);
      out += '\n';
    }
  }
  return out;
}

void save_graph(const HeteroGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write graph file " + path.string());
  out << format_graph(g);
}

namespace {

/// Draws local ids with probability proportional to (id + 1)^-skew.
class EndpointSampler {
 public:
  EndpointSampler(LocalId count, double skew) : count_(count) {
    if (skew > 0.0) {
      cdf_.resize(count);
      double acc = 0.0;
      for (LocalId i = 0; i < count; ++i) {
        acc += std::pow(static_cast<double>(i) + 1.0, -skew);
        cdf_[i] = acc;
      }
    }
  }

  template <typename Rng>
  LocalId operator()(Rng& rng) const {
    if (cdf_.empty()) return std::uniform_int_distribution<LocalId>(0, count_ - 1)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<LocalId>(std::min<std::size_t>(it - cdf_.begin(), count_ - 1));
  }

 private:
  LocalId count_;
  std::vector<double> cdf_;
};

}  // namespace

HeteroGraph generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_types == 0) throw InvalidArgument("synthetic spec: num_types must be >= 1");
  if (spec.num_relations == 0) throw InvalidArgument("synthetic spec: num_relations must be >= 1");
  if (spec.num_edges == 0) throw InvalidArgument("synthetic spec: num_edges must be >= 1");
  if (spec.feature_dim == 0) throw InvalidArgument("synthetic spec: feature_dim must be >= 1");
  if (spec.skew < 0.0) throw InvalidArgument("synthetic spec: skew must be >= 0");
  if (spec.type_counts.size() != spec.num_types) {
    throw InvalidArgument("synthetic spec: type_counts has " + std::to_string(spec.type_counts.size()) + " entries for " + std::to_string(spec.num_types) + " types");
  }
  for (std::size_t t = 0; t < spec.type_counts.size(); ++t) {
    if (spec.type_counts[t] == 0) {
      throw InvalidArgument("synthetic spec: unsatisfiable, type " + std::to_string(t) + " has zero vertices but edges were requested");
    }
  }
  if (spec.num_edges > std::numeric_limits<EdgeId>::max()) {
    throw InvalidArgument("synthetic spec: num_edges exceeds the 32-bit edge id space");
  }

  const std::uint32_t num_types = spec.num_types;
  std::vector<VertexType> types(num_types);
  for (TypeId t = 0; t < num_types; ++t) {
    types[t] = {t, "type" + std::to_string(t), spec.type_counts[t], spec.feature_dim};
  }
  std::vector<Relation> relations(spec.num_relations);
  const std::uint64_t pairs = static_cast<std::uint64_t>(num_types) * num_types;
  for (RelationId r = 0; r < spec.num_relations; ++r) {
    const std::uint64_t p = r % pairs;
    relations[r] = {r, "rel" + std::to_string(r), static_cast<TypeId>(p % num_types),
                    static_cast<TypeId>(p / num_types)};
  }

  std::vector<EndpointSampler> samplers;
  samplers.reserve(num_types);
  for (TypeId t = 0; t < num_types; ++t) samplers.emplace_back(spec.type_counts[t], spec.skew);

  std::vector<std::vector<Edge>> edges(spec.num_relations);
  const std::uint64_t per = spec.num_edges / spec.num_relations;
  const std::uint64_t extra = spec.num_edges % spec.num_relations;
  for (RelationId r = 0; r < spec.num_relations; ++r) {
    const std::uint64_t n = per + (r < extra ? 1 : 0);
    std::mt19937_64 rng(mix_seed(spec.seed, r));
    const auto& src = samplers[relations[r].src_type];
    const auto& dst = samplers[relations[r].dst_type];
    edges[r].reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      const LocalId s = src(rng);
      const LocalId d = dst(rng);
      edges[r].push_back({s, d});
    }
  }
  return make_graph(std::move(types), std::move(relations), std::move(edges));
}

std::vector<LocalId> even_type_counts(std::uint64_t total, std::uint32_t types) {
  std::vector<LocalId> counts(types, 0);
  if (types == 0) return counts;
  for (std::uint32_t t = 0; t < types; ++t) {
    counts[t] = static_cast<LocalId>(total / types + (t < total % types ? 1 : 0));
  }
  return counts;
}

std::optional<DatasetPreset> find_preset(std::string_view name, std::uint32_t downscale) {
  struct Shape {
    std::string_view name;
    std::uint64_t vertices;
    std::uint64_t edges;
    std::uint32_t types;
    std::uint32_t relations;
    std::uint32_t labeled;
  };
  // Totals of the RDF node-classification benchmarks; `labeled` is the size
  // of their conventional training split.
  static constexpr Shape kShapes[] = {
      {"aifb", 7262, 48810, 7, 104, 140},
      {"bgs", 94806, 672884, 27, 122, 117},
      {"mutag", 27163, 148100, 5, 50, 272},
      {"am", 1885136, 5668682, 7, 108, 802},
  };
  if (downscale == 0) downscale = 1;
  for (const auto& s : kShapes) {
    if (s.name != name) continue;
    DatasetPreset p;
    p.name = std::string(s.name);
    p.spec.num_types = s.types;
    p.spec.num_relations = s.relations;
    p.spec.type_counts = even_type_counts(std::max<std::uint64_t>(s.vertices / downscale, s.types), s.types);
    p.spec.num_edges = std::max<std::uint64_t>(s.edges / downscale, 1);
    p.spec.feature_dim = 16;
    p.spec.skew = 0.8;
    p.spec.seed = 42;
    p.target_type = 0;
    p.labeled = std::min<std::uint32_t>(s.labeled, p.spec.type_counts[0]);
    if (downscale > 1) p.name += "/" + std::to_string(downscale);
    return p;
  }
  return std::nullopt;
}

}  // namespace hetflow
