#ifndef BPT_GRAPH_IO_HPP
#define BPT_GRAPH_IO_HPP

#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bpt/errors.hpp"
#include "bpt/graph.hpp"

namespace bpt {

/// JSON form: header fields, one record per node, one record per edge.
/// Node and edge ordering is fixed (ids ascending; edges in predecessor
/// order per destination), so equal graphs serialize to equal bytes.
inline void export_graph_json(const BpGraph &graph, std::ostream &out) {
  const TreeShape &shape = graph.shape;
  out << "{\n";
  out << "  \"n_tokens\": " << shape.n_tokens << ",\n";
  out << "  \"n_padded\": " << shape.n_padded << ",\n";
  out << "  \"k\": " << graph.k << ",\n";
  out << "  \"mode\": \"" << mode_name(graph.mode) << "\",\n";
  out << "  \"nodes\": [\n";
  for (std::size_t id = 0; id < shape.num_nodes(); ++id) {
    const NodeRef node = shape.ref_of(id);
    const bool is_pad =
        shape.is_token(id) && shape.is_pad_leaf(static_cast<std::size_t>(node.index));
    out << "    {\"id\": " << id << ", \"level\": " << node.level
        << ", \"index\": " << node.index << ", \"is_pad\": " << (is_pad ? "true" : "false")
        << "}" << (id + 1 < shape.num_nodes() ? "," : "") << "\n";
  }
  out << "  ],\n";
  out << "  \"edges\": [\n";
  const std::size_t n_edges = graph.num_edges();
  for (std::size_t dst = 0; dst < shape.num_nodes(); ++dst) {
    for (std::size_t e = graph.offsets[dst]; e < graph.offsets[dst + 1]; ++e) {
      out << "    {\"src\": " << graph.src[e] << ", \"dst\": " << dst
          << ", \"relation\": \"" << graph.relation_at(e).to_string() << "\"}"
          << (e + 1 < n_edges ? "," : "") << "\n";
    }
  }
  out << "  ]\n";
  out << "}\n";
}

inline void export_graph_dot(const BpGraph &graph, std::ostream &out) {
  const TreeShape &shape = graph.shape;
  out << "digraph bpt {\n";
  out << "  rankdir=BT;\n";
  for (std::size_t id = 0; id < shape.num_nodes(); ++id) {
    const NodeRef node = shape.ref_of(id);
    out << "  n" << id << " [label=\"";
    if (shape.is_token(id)) {
      out << (shape.is_pad_leaf(static_cast<std::size_t>(node.index)) ? "pad" : "tok")
          << node.index;
    } else {
      out << "span(" << node.level << "," << node.index << ")";
    }
    out << "\"];\n";
  }
  for (std::size_t dst = 0; dst < shape.num_nodes(); ++dst) {
    for (std::size_t e = graph.offsets[dst]; e < graph.offsets[dst + 1]; ++e) {
      out << "  n" << graph.src[e] << " -> n" << dst << " [label=\""
          << graph.relation_at(e).to_string() << "\"];\n";
    }
  }
  out << "}\n";
}

inline void export_graph(const BpGraph &graph, const std::string &format,
                         std::ostream &out) {
  if (format == "json") {
    export_graph_json(graph, out);
  } else if (format == "dot") {
    export_graph_dot(graph, out);
  } else {
    throw UsageError("unknown graph format: '" + format + "' (expected json or dot)");
  }
  if (!out) throw IoError("failed writing graph output");
}

inline std::string export_graph_string(const BpGraph &graph, const std::string &format) {
  std::ostringstream out;
  export_graph(graph, format, out);
  return out.str();
}

/// Rebuild a BpGraph from its JSON export. Inverse of export_graph_json.
inline BpGraph import_graph_json(const std::string &text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("graph import: bad JSON: ") + e.what());
  }
  BpGraph graph;
  try {
    graph.shape = build_tree(doc.at("n_tokens").get<std::size_t>());
    graph.k = doc.at("k").get<std::int64_t>();
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode != "causal" && mode != "bidirectional")
      throw DataError("graph import: bad mode: " + mode);
    graph.mode = mode == "causal" ? Mode::causal : Mode::bidirectional;
    if (doc.at("n_padded").get<std::size_t>() != graph.shape.n_padded)
      throw DataError("graph import: n_padded mismatch");
    if (doc.at("nodes").size() != graph.shape.num_nodes())
      throw DataError("graph import: node count mismatch");

    const RelationSet relset = graph.relations();
    graph.offsets.assign(graph.shape.num_nodes() + 1, 0);
    std::size_t expected_dst = 0;
    for (const auto &edge : doc.at("edges")) {
      const auto dst = edge.at("dst").get<std::size_t>();
      if (dst >= graph.shape.num_nodes()) throw DataError("graph import: dst out of range");
      if (dst < expected_dst)
        throw DataError("graph import: edges not grouped by destination");
      while (expected_dst < dst) graph.offsets[++expected_dst] = graph.src.size();
      graph.src.push_back(edge.at("src").get<std::uint32_t>());
      graph.rel_index.push_back(static_cast<std::uint32_t>(
          relset.index_of(RelationId::parse(edge.at("relation").get<std::string>()))));
    }
    while (expected_dst < graph.shape.num_nodes())
      graph.offsets[++expected_dst] = graph.src.size();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("graph import: missing or bad field: ") + e.what());
  }
  return graph;
}

inline bool graphs_equal(const BpGraph &a, const BpGraph &b) {
  return a.shape.n_tokens == b.shape.n_tokens && a.shape.n_padded == b.shape.n_padded &&
         a.mode == b.mode && a.k == b.k && a.offsets == b.offsets && a.src == b.src &&
         a.rel_index == b.rel_index;
}

}  // namespace bpt

#endif  // BPT_GRAPH_IO_HPP
