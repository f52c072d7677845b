#include <catch2/catch_amalgamated.hpp>

#include "bpt/relation.hpp"
#include "bpt/tree.hpp"

using namespace bpt;

TEST_CASE("build_tree basic shapes") {
  SECTION("single token is its own root") {
    const TreeShape shape = build_tree(1);
    REQUIRE(shape.n_padded == 1);
    REQUIRE(shape.levels == 1);
    REQUIRE(shape.num_nodes() == 1);
    REQUIRE(shape.root_id() == 0);
  }
  SECTION("n = 4 gives 7 nodes over levels (4, 2, 1)") {
    const TreeShape shape = build_tree(4);
    REQUIRE(shape.num_nodes() == 7);
    REQUIRE(shape.nodes_at(0) == 4);
    REQUIRE(shape.nodes_at(1) == 2);
    REQUIRE(shape.nodes_at(2) == 1);
    REQUIRE(shape.levels == 3);
  }
  SECTION("n = 6 pads to 8 with two padding leaves") {
    const TreeShape shape = build_tree(6);
    REQUIRE(shape.n_padded == 8);
    REQUIRE(shape.num_nodes() == 15);
    REQUIRE_FALSE(shape.is_pad_leaf(5));
    REQUIRE(shape.is_pad_leaf(6));
    REQUIRE(shape.is_pad_leaf(7));
  }
  SECTION("zero tokens rejected") {
    REQUIRE_THROWS_AS(build_tree(0), InvalidInputError);
  }
}

TEST_CASE("node count is 2n - 1 for power-of-two n") {
  for (std::size_t n : {1u, 2u, 4u, 8u, 16u, 64u, 256u}) {
    const TreeShape shape = build_tree(n);
    REQUIRE(shape.num_nodes() == 2 * n - 1);
    REQUIRE(shape.nodes_at(shape.levels - 1) == 1);
  }
}

TEST_CASE("parent") {
  const TreeShape shape = build_tree(8);
  REQUIRE(parent(NodeRef{0, 5}, shape) == NodeRef{1, 2});
  REQUIRE(parent(NodeRef{2, 1}, shape) == NodeRef{3, 0});
  REQUIRE_FALSE(parent(NodeRef{3, 0}, shape).has_value());
  REQUIRE_THROWS_AS(parent(NodeRef{0, 8}, shape), InvalidInputError);
  REQUIRE_THROWS_AS(parent(NodeRef{4, 0}, shape), InvalidInputError);
}

TEST_CASE("span_range") {
  const TreeShape shape = build_tree(8);
  REQUIRE(span_range(NodeRef{2, 1}, shape) == std::pair<std::size_t, std::size_t>{4, 8});
  REQUIRE(span_range(NodeRef{0, 3}, shape) == std::pair<std::size_t, std::size_t>{3, 4});
  REQUIRE(span_range(NodeRef{3, 0}, shape) == std::pair<std::size_t, std::size_t>{0, 8});
  REQUIRE_THROWS_AS(span_range(NodeRef{1, 4}, shape), InvalidInputError);
}

TEST_CASE("flat id mapping is a bijection") {
  for (std::size_t n : {1u, 2u, 8u, 16u}) {
    const TreeShape shape = build_tree(n);
    for (std::size_t id = 0; id < shape.num_nodes(); ++id) {
      const NodeRef node = shape.ref_of(id);
      REQUIRE(shape.valid(node));
      REQUIRE(shape.id_of(node) == id);
    }
    // Token nodes occupy the first n_padded ids.
    for (std::size_t i = 0; i < shape.n_padded; ++i) {
      REQUIRE(shape.ref_of(i).level == 0);
      REQUIRE(shape.ref_of(i).index == static_cast<std::int64_t>(i));
    }
  }
}

TEST_CASE("relation set indexing is a bijection") {
  for (int levels : {1, 2, 4, 9}) {
    for (std::int64_t k : {1, 2, 7}) {
      const RelationSet set(levels, k);
      const std::size_t lc = levels > 1 ? static_cast<std::size_t>(levels - 1) : 0;
      REQUIRE(set.size() == 1 + lc + 2 * lc * static_cast<std::size_t>(k + 1));
      for (std::size_t i = 0; i < set.size(); ++i) {
        const RelationId rel = set.at(i);
        REQUIRE(set.index_of(rel) == i);
        REQUIRE(RelationId::parse(rel.to_string()) == rel);
      }
    }
  }
}

TEST_CASE("relation set rejects out-of-range labels") {
  const RelationSet set(4, 2);
  REQUIRE_THROWS_AS(set.index_of(RelationId::anc(4)), InvalidInputError);
  REQUIRE_THROWS_AS(set.index_of(RelationId::anc(0)), InvalidInputError);
  REQUIRE_THROWS_AS(set.index_of(RelationId::ctx(Side::left, 3, 1)), InvalidInputError);
  REQUIRE_THROWS_AS(set.index_of(RelationId::ctx(Side::left, 0, 4)), InvalidInputError);
  REQUIRE_THROWS_AS(set.index_of(RelationId::ctx(Side::left, 0, 0)), InvalidInputError);
  REQUIRE_THROWS_AS(set.at(set.size()), InvalidInputError);
}
