#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "bpt/graph_io.hpp"

using namespace bpt;

TEST_CASE("json export carries one record per node and edge") {
  const BpGraph graph = build_graph(2, 1, Mode::bidirectional);
  const std::string text = export_graph_string(graph, "json");
  const auto doc = nlohmann::json::parse(text);
  REQUIRE(doc["nodes"].size() == 3);
  REQUIRE(doc["edges"].size() == 7);
  REQUIRE(doc["mode"] == "bidirectional");
  REQUIRE(doc["n_padded"] == 2);
}

TEST_CASE("export is byte-reproducible") {
  const BpGraph graph = build_graph(6, 2, Mode::causal);
  REQUIRE(export_graph_string(graph, "json") == export_graph_string(graph, "json"));
  REQUIRE(export_graph_string(graph, "dot") == export_graph_string(graph, "dot"));
}

TEST_CASE("padding leaves are flagged in the export") {
  const BpGraph graph = build_graph(6, 1, Mode::bidirectional);
  const auto doc = nlohmann::json::parse(export_graph_string(graph, "json"));
  int pads = 0;
  for (const auto &node : doc["nodes"])
    if (node["is_pad"].get<bool>()) ++pads;
  REQUIRE(pads == 2);
}

TEST_CASE("dot export is a digraph with labeled edges") {
  const BpGraph graph = build_graph(4, 1, Mode::bidirectional);
  const std::string text = export_graph_string(graph, "dot");
  REQUIRE(text.rfind("digraph", 0) == 0);
  REQUIRE(text.find("ctx:left:0:1") != std::string::npos);
  REQUIRE(text.find("anc:1") != std::string::npos);
}

TEST_CASE("unknown or empty format is a usage error") {
  const BpGraph graph = build_graph(2, 1, Mode::bidirectional);
  REQUIRE_THROWS_AS(export_graph_string(graph, ""), UsageError);
  REQUIRE_THROWS_AS(export_graph_string(graph, "xml"), UsageError);
}

TEST_CASE("json round trip reproduces the graph") {
  for (std::size_t n : {1u, 2u, 6u, 16u}) {
    for (const Mode mode : {Mode::causal, Mode::bidirectional}) {
      const BpGraph graph = build_graph(n, 2, mode);
      const BpGraph back = import_graph_json(export_graph_string(graph, "json"));
      REQUIRE(graphs_equal(graph, back));
    }
  }
}

TEST_CASE("import rejects malformed documents") {
  REQUIRE_THROWS_AS(import_graph_json("not json"), DataError);
  REQUIRE_THROWS_AS(import_graph_json("{}"), DataError);
}
