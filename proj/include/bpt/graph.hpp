#ifndef BPT_GRAPH_HPP
#define BPT_GRAPH_HPP

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/relation.hpp"
#include "bpt/tree.hpp"

namespace bpt {

enum class Mode : std::uint8_t { causal = 0, bidirectional = 1 };

inline std::string mode_name(Mode mode) {
  return mode == Mode::causal ? "causal" : "bidirectional";
}

/// Directed attention graph in compressed form, grouped by destination.
/// Edge e runs src[e] -> u for offsets[u] <= e < offsets[u+1]; rel_index[e]
/// is the dense RelationSet index of its label.
///
/// Predecessor order per destination is fixed: self first, then left
/// context fine-to-coarse, then right context fine-to-coarse, then
/// affiliated token edges by token index.
struct BpGraph {
  TreeShape shape;
  Mode mode = Mode::bidirectional;
  std::int64_t k = 1;
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> rel_index;

  std::size_t num_nodes() const { return shape.num_nodes(); }
  std::size_t num_edges() const { return src.size(); }
  std::size_t in_degree(std::size_t node) const {
    return offsets[node + 1] - offsets[node];
  }

  RelationSet relations() const { return RelationSet(shape.levels, k); }

  RelationId relation_at(std::size_t edge) const {
    return relations().at(rel_index[edge]);
  }
};

/// Contextual predecessors of token i on one side: up to k nodes per level
/// plus one alignment extension, ascending until the side is covered.
///
/// Right side: start p = i + 1 at level 0; emit p, p+1, ... (at most k);
/// if the next uncovered index is odd it cannot align with a parent
/// boundary, so emit it too; ascend with p <- next / 2. The left side is
/// the mirror image. Emitted spans are pairwise disjoint and cover the
/// whole side, which is what makes the per-token partition invariant hold.
inline std::vector<std::pair<NodeRef, RelationId>> contextual_nodes(
    std::size_t i, std::int64_t k, const TreeShape &shape, Side side) {
  if (i >= shape.n_padded)
    throw InvalidInputError("contextual_nodes: token index out of range");
  if (k < 1) throw InvalidInputError("contextual_nodes: k must be >= 1");

  std::vector<std::pair<NodeRef, RelationId>> out;
  if (side == Side::right) {
    std::int64_t p = static_cast<std::int64_t>(i) + 1;
    for (int level = 0; level < shape.levels; ++level) {
      const auto count = static_cast<std::int64_t>(shape.nodes_at(level));
      if (p >= count) break;
      int joined = 0;
      std::int64_t q = p;
      while (q < count && joined < k) {
        ++joined;
        out.push_back({NodeRef{level, q}, RelationId::ctx(Side::right, level, joined)});
        ++q;
      }
      if (q >= count) break;
      if (q % 2 == 1) {
        out.push_back({NodeRef{level, q}, RelationId::ctx(Side::right, level, joined + 1)});
        ++q;
        if (q >= count) break;
      }
      p = q / 2;
    }
  } else {
    std::int64_t p = static_cast<std::int64_t>(i) - 1;
    for (int level = 0; level < shape.levels; ++level) {
      if (p < 0) break;
      int joined = 0;
      std::int64_t q = p;
      while (q >= 0 && joined < k) {
        ++joined;
        out.push_back({NodeRef{level, q}, RelationId::ctx(Side::left, level, joined)});
        --q;
      }
      if (q < 0) break;
      if (q % 2 == 0) {
        // Leftmost emitted index is odd: its parent pair is split, take one more.
        out.push_back({NodeRef{level, q}, RelationId::ctx(Side::left, level, joined + 1)});
        --q;
        if (q < 0) break;
      }
      p = (q + 1) / 2 - 1;
    }
  }
  return out;
}

inline BpGraph build_graph(std::size_t n_tokens, std::int64_t k, Mode mode) {
  if (k < 1) throw InvalidInputError("build_graph: k must be >= 1");
  BpGraph graph;
  graph.shape = build_tree(n_tokens);
  graph.mode = mode;
  graph.k = k;

  const TreeShape &shape = graph.shape;
  const RelationSet relset = graph.relations();
  const std::size_t n = shape.n_padded;

  graph.offsets.assign(shape.num_nodes() + 1, 0);

  auto push_edge = [&](std::size_t src_id, const RelationId &rel) {
    graph.src.push_back(static_cast<std::uint32_t>(src_id));
    graph.rel_index.push_back(static_cast<std::uint32_t>(relset.index_of(rel)));
  };

  // Token destinations: self, left context, right context.
  for (std::size_t i = 0; i < n; ++i) {
    graph.offsets[i] = graph.src.size();
    push_edge(i, RelationId::self_rel());
    for (const auto &[node, rel] : contextual_nodes(i, k, shape, Side::left))
      push_edge(shape.id_of(node), rel);
    if (mode == Mode::bidirectional) {
      for (const auto &[node, rel] : contextual_nodes(i, k, shape, Side::right))
        push_edge(shape.id_of(node), rel);
    }
  }

  // Span destinations: self plus one affiliated edge per contained token.
  for (std::size_t id = n; id < shape.num_nodes(); ++id) {
    graph.offsets[id] = graph.src.size();
    push_edge(id, RelationId::self_rel());
    const NodeRef node = shape.ref_of(id);
    const auto [begin, end] = span_range(node, shape);
    for (std::size_t t = begin; t < end; ++t)
      push_edge(t, RelationId::anc(node.level));
  }
  graph.offsets[shape.num_nodes()] = graph.src.size();
  return graph;
}

struct DegreeStats {
  std::size_t min_degree = 0;
  std::size_t max_degree = 0;
  double mean_degree = 0.0;
  std::size_t total_edges = 0;
};

/// In-degree summary over token nodes only.
inline DegreeStats attention_degree(const BpGraph &graph) {
  DegreeStats stats;
  const std::size_t n = graph.shape.n_padded;
  stats.min_degree = graph.in_degree(0);
  stats.max_degree = graph.in_degree(0);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t deg = graph.in_degree(i);
    sum += deg;
    if (deg < stats.min_degree) stats.min_degree = deg;
    if (deg > stats.max_degree) stats.max_degree = deg;
  }
  stats.mean_degree = static_cast<double>(sum) / static_cast<double>(n);
  stats.total_edges = graph.num_edges();
  return stats;
}

}  // namespace bpt

#endif  // BPT_GRAPH_HPP
