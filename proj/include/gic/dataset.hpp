#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gic/graph.hpp"

namespace gic {

struct GraphCollection {
  std::vector<AttributeGraph> graphs;
  int num_classes = 0;
  std::size_t feature_dim = 0;
  /// Number of distinct vertex labels (0 when the dataset has none).
  int num_node_labels = 0;
  /// Original graph label value for each contiguous class index.
  std::vector<long long> class_values;
};

/// Reads a TU benchmark dataset: {name}_A.txt, {name}_graph_indicator.txt,
/// {name}_graph_labels.txt and optionally {name}_node_labels.txt. Vertex ids
/// are 1-indexed; separators may be "," or ", ". Graph and vertex labels are
/// remapped to contiguous 0-based indices in ascending order of value.
GraphCollection load_tu_dataset(const std::filesystem::path& directory, const std::string& name);

struct FeatureOptions {
  bool use_labels = true;
  bool use_degree = true;
};

/// X = [one-hot(node label) | degree]. num_node_labels fixes the one-hot width
/// so that every graph of a collection shares the same dimension.
AttributeGraph build_features(const AttributeGraph& g, FeatureOptions opts, int num_node_labels);
void build_features(GraphCollection& collection, FeatureOptions opts);

/// One graph per line: {"m", "edges": [[u, v, w], ...] with u <= v,
/// "x": [[...], ...], "label", "node_labels"}.
std::string to_json_line(const AttributeGraph& g);
AttributeGraph from_json_line(const std::string& line);

void write_graph_jsonl(std::ostream& out, const std::vector<AttributeGraph>& graphs);
void write_graph_jsonl(const std::filesystem::path& path, const std::vector<AttributeGraph>& graphs);
/// Reloads a canonical serialization; class count and feature dimension are
/// recovered from the graphs.
GraphCollection read_graph_jsonl(const std::filesystem::path& path);

}  // namespace gic
