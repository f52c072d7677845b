#ifndef BPT_ORACLE_HPP
#define BPT_ORACLE_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/graph.hpp"
#include "bpt/relation.hpp"

// Independent edge-construction path used to cross-check build_graph.
// The graph here is derived from an explicit linked tree: same-level
// neighbors are found by climbing to the first branching ancestor and
// descending the adjacent subtree, never by index arithmetic, and the
// context walk advances neighbor pointers k times per level before
// stepping to the parent. Keep this file free of contextual_nodes logic.

namespace bpt::oracle {

struct OracleEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  RelationId rel;

  friend bool operator==(const OracleEdge &a, const OracleEdge &b) {
    return a.src == b.src && a.dst == b.dst && a.rel == b.rel;
  }
};

struct EdgeCounts {
  std::size_t self_loops = 0;
  std::size_t affiliated = 0;
  std::size_t ctx_left = 0;
  std::size_t ctx_right = 0;

  std::size_t total() const {
    return self_loops + affiliated + ctx_left + ctx_right;
  }
};

namespace detail {

struct TreeNode {
  int level = 0;
  std::uint32_t id = 0;
  TreeNode *parent = nullptr;
  TreeNode *left_child = nullptr;
  TreeNode *right_child = nullptr;
};

struct LinkedTree {
  std::vector<std::unique_ptr<TreeNode>> pool;
  std::vector<TreeNode *> leaves;  // in sequence order
  TreeNode *root = nullptr;

  TreeNode *make(int level) {
    pool.push_back(std::make_unique<TreeNode>());
    pool.back()->level = level;
    return pool.back().get();
  }
};

inline TreeNode *grow(LinkedTree &tree, int level) {
  TreeNode *node = tree.make(level);
  if (level == 0) {
    tree.leaves.push_back(node);
    return node;
  }
  node->left_child = grow(tree, level - 1);
  node->right_child = grow(tree, level - 1);
  node->left_child->parent = node;
  node->right_child->parent = node;
  return node;
}

inline LinkedTree build_linked_tree(std::size_t n_tokens) {
  if (n_tokens == 0) throw InvalidInputError("oracle: n_tokens must be >= 1");
  std::size_t n_padded = 1;
  int top = 0;
  while (n_padded < n_tokens) {
    n_padded <<= 1;
    ++top;
  }
  LinkedTree tree;
  tree.root = grow(tree, top);
  // Assign flat ids level by level through leaf-order traversal.
  std::uint32_t next = 0;
  for (int level = 0; level <= top; ++level) {
    const std::size_t stride = std::size_t{1} << level;
    for (std::size_t i = 0; i < tree.leaves.size(); i += stride) {
      TreeNode *node = tree.leaves[i];
      for (int up = 0; up < level; ++up) node = node->parent;
      node->id = next++;
    }
  }
  return tree;
}

inline bool is_left_child(const TreeNode *node) {
  return node->parent != nullptr && node->parent->left_child == node;
}

inline bool is_right_child(const TreeNode *node) {
  return node->parent != nullptr && node->parent->right_child == node;
}

/// Same-level neighbor to the right, or null past the boundary.
inline TreeNode *right_neighbor(TreeNode *node) {
  int climbed = 0;
  while (node->parent != nullptr && is_right_child(node)) {
    node = node->parent;
    ++climbed;
  }
  if (node->parent == nullptr) return nullptr;
  node = node->parent->right_child;
  for (; climbed > 0; --climbed) node = node->left_child;
  return node;
}

inline TreeNode *left_neighbor(TreeNode *node) {
  int climbed = 0;
  while (node->parent != nullptr && is_left_child(node)) {
    node = node->parent;
    ++climbed;
  }
  if (node->parent == nullptr) return nullptr;
  node = node->parent->left_child;
  for (; climbed > 0; --climbed) node = node->right_child;
  return node;
}

inline void collect_leaves(TreeNode *node, std::vector<TreeNode *> &out) {
  if (node->left_child == nullptr) {
    out.push_back(node);
    return;
  }
  collect_leaves(node->left_child, out);
  collect_leaves(node->right_child, out);
}

}  // namespace detail

/// Full labeled edge set produced by the neighbor walk.
inline std::vector<OracleEdge> oracle_edges(std::size_t n_tokens, std::int64_t k,
                                            Mode mode) {
  if (k < 1) throw InvalidInputError("oracle: k must be >= 1");
  detail::LinkedTree tree = detail::build_linked_tree(n_tokens);
  std::vector<OracleEdge> edges;

  for (detail::TreeNode *leaf : tree.leaves) {
    edges.push_back({leaf->id, leaf->id, RelationId::self_rel()});

    detail::TreeNode *l = detail::left_neighbor(leaf);
    while (l != nullptr) {
      int joined = 0;
      for (std::int64_t j = 0; j < k && l != nullptr; ++j) {
        ++joined;
        edges.push_back({l->id, leaf->id, RelationId::ctx(Side::left, l->level, joined)});
        l = detail::left_neighbor(l);
      }
      if (l == nullptr) break;
      if (detail::is_left_child(l)) {
        // The next candidate starts a parent pair whose right half is
        // already covered; take it before ascending.
        edges.push_back(
            {l->id, leaf->id, RelationId::ctx(Side::left, l->level, joined + 1)});
        l = detail::left_neighbor(l);
        if (l == nullptr) break;
      }
      l = l->parent;
    }

    if (mode == Mode::bidirectional) {
      detail::TreeNode *r = detail::right_neighbor(leaf);
      while (r != nullptr) {
        int joined = 0;
        for (std::int64_t j = 0; j < k && r != nullptr; ++j) {
          ++joined;
          edges.push_back(
              {r->id, leaf->id, RelationId::ctx(Side::right, r->level, joined)});
          r = detail::right_neighbor(r);
        }
        if (r == nullptr) break;
        if (detail::is_right_child(r)) {
          edges.push_back(
              {r->id, leaf->id, RelationId::ctx(Side::right, r->level, joined + 1)});
          r = detail::right_neighbor(r);
          if (r == nullptr) break;
        }
        r = r->parent;
      }
    }
  }

  // Span nodes: self loop plus one affiliated edge per contained leaf,
  // gathered by subtree traversal.
  for (const auto &node : tree.pool) {
    if (node->left_child == nullptr) continue;
    edges.push_back({node->id, node->id, RelationId::self_rel()});
    std::vector<detail::TreeNode *> contained;
    detail::collect_leaves(node.get(), contained);
    for (detail::TreeNode *leaf : contained)
      edges.push_back({leaf->id, node->id, RelationId::anc(node->level)});
  }
  return edges;
}

inline EdgeCounts count_edges_oracle(std::size_t n_tokens, std::int64_t k, Mode mode) {
  EdgeCounts counts;
  for (const OracleEdge &edge : oracle_edges(n_tokens, k, mode)) {
    switch (edge.rel.kind) {
      case RelKind::self: ++counts.self_loops; break;
      case RelKind::anc: ++counts.affiliated; break;
      case RelKind::ctx:
        if (edge.rel.side == Side::left)
          ++counts.ctx_left;
        else
          ++counts.ctx_right;
        break;
    }
  }
  return counts;
}

}  // namespace bpt::oracle

#endif  // BPT_ORACLE_HPP
