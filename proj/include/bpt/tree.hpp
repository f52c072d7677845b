#ifndef BPT_TREE_HPP
#define BPT_TREE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpt/errors.hpp"

namespace bpt {

/// A node of the binary-partition tree, addressed as (level, index).
/// Level 0 holds the token leaves; the top level holds the single root.
struct NodeRef {
  int level = 0;
  std::int64_t index = 0;

  friend bool operator==(const NodeRef &a, const NodeRef &b) {
    return a.level == b.level && a.index == b.index;
  }
};

/// Perfect binary tree over a sequence padded to a power of two.
///
/// Node (l, m) covers the half-open token range [m*2^l, (m+1)*2^l).
/// Flat ids are level-major: leaves first, then each higher level, so
/// token node i has id i and the root has id 2*n_padded - 2.
struct TreeShape {
  std::size_t n_tokens = 0;
  std::size_t n_padded = 0;
  int levels = 0;
  std::vector<std::size_t> level_offsets;  // levels + 1 entries

  std::size_t num_nodes() const { return 2 * n_padded - 1; }

  std::size_t nodes_at(int level) const { return n_padded >> level; }

  bool valid(const NodeRef &node) const {
    return node.level >= 0 && node.level < levels && node.index >= 0 &&
           static_cast<std::size_t>(node.index) < nodes_at(node.level);
  }

  std::size_t id_of(const NodeRef &node) const {
    if (!valid(node)) throw InvalidInputError("node out of range");
    return level_offsets[static_cast<std::size_t>(node.level)] +
           static_cast<std::size_t>(node.index);
  }

  NodeRef ref_of(std::size_t id) const {
    if (id >= num_nodes()) throw InvalidInputError("node id out of range");
    int level = 0;
    while (id >= level_offsets[static_cast<std::size_t>(level) + 1]) ++level;
    return NodeRef{level, static_cast<std::int64_t>(
                              id - level_offsets[static_cast<std::size_t>(level)])};
  }

  std::size_t root_id() const { return num_nodes() - 1; }

  bool is_token(std::size_t id) const { return id < n_padded; }

  /// Leaves at or beyond n_tokens carry the reserved padding symbol.
  bool is_pad_leaf(std::size_t token_index) const {
    return token_index >= n_tokens;
  }
};

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline TreeShape build_tree(std::size_t n_tokens) {
  if (n_tokens == 0) throw InvalidInputError("build_tree: n_tokens must be >= 1");
  TreeShape shape;
  shape.n_tokens = n_tokens;
  shape.n_padded = next_power_of_two(n_tokens);
  shape.levels = 1;
  for (std::size_t m = shape.n_padded; m > 1; m >>= 1) ++shape.levels;
  shape.level_offsets.resize(static_cast<std::size_t>(shape.levels) + 1);
  shape.level_offsets[0] = 0;
  for (int l = 0; l < shape.levels; ++l)
    shape.level_offsets[static_cast<std::size_t>(l) + 1] =
        shape.level_offsets[static_cast<std::size_t>(l)] + shape.nodes_at(l);
  return shape;
}

inline std::optional<NodeRef> parent(const NodeRef &node, const TreeShape &shape) {
  if (!shape.valid(node)) throw InvalidInputError("parent: invalid node");
  if (node.level == shape.levels - 1) return std::nullopt;
  return NodeRef{node.level + 1, node.index / 2};
}

/// Half-open token range covered by a node.
inline std::pair<std::size_t, std::size_t> span_range(const NodeRef &node,
                                                      const TreeShape &shape) {
  if (!shape.valid(node)) throw InvalidInputError("span_range: invalid node");
  const std::size_t width = std::size_t{1} << node.level;
  const std::size_t begin = static_cast<std::size_t>(node.index) * width;
  return {begin, begin + width};
}

}  // namespace bpt

#endif  // BPT_TREE_HPP
