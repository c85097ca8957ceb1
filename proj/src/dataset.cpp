#include "gic/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gic/error.hpp"

namespace gic {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_required(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open required file: " + path.string());
  return in;
}

/// Splits a TU line on commas and/or whitespace into integer fields.
std::vector<long long> parse_fields(const std::string& line, const fs::path& file, std::size_t lineno) {
  std::vector<long long> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError(file.filename().string() + ":" + std::to_string(lineno) +
                        ": not an integer: '" + token + "'");
    }
    token.clear();
  };
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
      flush();
    } else {
      token.push_back(ch);
    }
  }
  flush();
  return out;
}

/// Reads one integer per non-empty line.
std::vector<long long> read_column(const fs::path& path) {
  auto in = open_required(path);
  std::vector<long long> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = parse_fields(line, path, lineno);
    if (fields.empty()) continue;
    if (fields.size() != 1) {
      throw FormatError(path.filename().string() + ":" + std::to_string(lineno) + ": expected one value");
    }
    out.push_back(fields[0]);
  }
  return out;
}

/// Maps arbitrary integer labels onto 0..n-1 in ascending value order.
std::map<long long, int> contiguous(const std::vector<long long>& values) {
  std::map<long long, int> index;
  for (long long v : values) index.emplace(v, 0);
  int next = 0;
  for (auto& [value, idx] : index) idx = next++;
  return index;
}

}  // namespace

GraphCollection load_tu_dataset(const fs::path& directory, const std::string& name) {
  if (!fs::is_directory(directory)) throw IoError("dataset directory does not exist: " + directory.string());
  const fs::path a_path = directory / (name + "_A.txt");
  const fs::path ind_path = directory / (name + "_graph_indicator.txt");
  const fs::path lab_path = directory / (name + "_graph_labels.txt");
  const fs::path node_lab_path = directory / (name + "_node_labels.txt");
  for (const auto& p : {a_path, ind_path, lab_path}) {
    if (!fs::exists(p)) throw IoError("missing required file: " + p.string());
  }

  const auto indicator = read_column(ind_path);
  const auto graph_labels = read_column(lab_path);
  const std::size_t n_graphs = graph_labels.size();
  const std::size_t n_nodes = indicator.size();

  std::vector<std::size_t> graph_of(n_nodes);
  std::vector<std::size_t> local_index(n_nodes);
  std::vector<std::size_t> graph_sizes(n_graphs, 0);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const long long gid = indicator[i];
    if (gid < 1 || static_cast<std::size_t>(gid) > n_graphs) {
      throw FormatError(ind_path.filename().string() + ":" + std::to_string(i + 1) + ": graph id " +
                        std::to_string(gid) + " has no entry in " + lab_path.filename().string() +
                        " (" + std::to_string(n_graphs) + " labels)");
    }
    graph_of[i] = static_cast<std::size_t>(gid - 1);
    local_index[i] = graph_sizes[graph_of[i]]++;
  }

  std::vector<long long> node_labels_raw;
  const bool has_node_labels = fs::exists(node_lab_path);
  if (has_node_labels) {
    node_labels_raw = read_column(node_lab_path);
    if (node_labels_raw.size() != n_nodes) {
      throw FormatError(node_lab_path.filename().string() + ": " + std::to_string(node_labels_raw.size()) +
                        " labels for " + std::to_string(n_nodes) + " vertices");
    }
  }

  std::vector<std::vector<Edge>> edges(n_graphs);
  {
    auto in = open_required(a_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto f = parse_fields(line, a_path, lineno);
      if (f.empty()) continue;
      const std::string where = a_path.filename().string() + ":" + std::to_string(lineno) + ": ";
      if (f.size() != 2) throw FormatError(where + "expected a vertex pair");
      for (long long v : f) {
        if (v < 1 || static_cast<std::size_t>(v) > n_nodes) {
          throw FormatError(where + "edge references unknown vertex " + std::to_string(v));
        }
      }
      const auto u = static_cast<std::size_t>(f[0] - 1);
      const auto v = static_cast<std::size_t>(f[1] - 1);
      if (graph_of[u] != graph_of[v]) throw FormatError(where + "edge connects two different graphs");
      // TU lists both directions; normalize to (min, max) and dedupe below.
      const std::size_t a = std::min(local_index[u], local_index[v]);
      const std::size_t b = std::max(local_index[u], local_index[v]);
      edges[graph_of[u]].push_back({a, b, 1.0});
    }
  }

  const auto class_index = contiguous(graph_labels);
  const auto node_index = has_node_labels ? contiguous(node_labels_raw) : std::map<long long, int>{};

  std::vector<std::vector<int>> node_labels(n_graphs);
  if (has_node_labels) {
    for (std::size_t g = 0; g < n_graphs; ++g) node_labels[g].resize(graph_sizes[g]);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      node_labels[graph_of[i]][local_index[i]] = node_index.at(node_labels_raw[i]);
    }
  }

  GraphCollection out;
  out.num_classes = static_cast<int>(class_index.size());
  out.num_node_labels = static_cast<int>(node_index.size());
  for (const auto& [value, idx] : class_index) out.class_values.push_back(value);
  out.graphs.reserve(n_graphs);
  for (std::size_t g = 0; g < n_graphs; ++g) {
    auto& es = edges[g];
    std::sort(es.begin(), es.end(), [](const Edge& a, const Edge& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    es.erase(std::unique(es.begin(), es.end(),
                         [](const Edge& a, const Edge& b) { return a.u == b.u && a.v == b.v; }),
             es.end());
    std::optional<std::vector<int>> labels;
    if (has_node_labels) labels = std::move(node_labels[g]);
    out.graphs.push_back(AttributeGraph::from_edges(graph_sizes[g], es,
                                                    Matrix(static_cast<Eigen::Index>(graph_sizes[g]), 0),
                                                    class_index.at(graph_labels[g]), std::move(labels)));
  }
  return out;
}

AttributeGraph build_features(const AttributeGraph& g, FeatureOptions opts, int num_node_labels) {
  if (!opts.use_labels && !opts.use_degree) {
    throw ConfigError("feature construction needs labels, degree, or both");
  }
  if (opts.use_labels && !g.node_labels()) {
    throw ConfigError("label features requested but the graph has no vertex labels");
  }
  const auto m = static_cast<Eigen::Index>(g.num_vertices());
  const Eigen::Index label_cols = opts.use_labels ? num_node_labels : 0;
  Matrix x = Matrix::Zero(m, label_cols + (opts.use_degree ? 1 : 0));
  if (opts.use_labels) {
    const auto& labels = *g.node_labels();
    for (Eigen::Index i = 0; i < m; ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      if (l < 0 || l >= num_node_labels) throw IndexError("vertex label outside one-hot range");
      x(i, l) = 1.0;
    }
  }
  if (opts.use_degree) x.col(label_cols) = g.degrees();
  return g.with_attributes(std::move(x));
}

void build_features(GraphCollection& collection, FeatureOptions opts) {
  for (auto& g : collection.graphs) g = build_features(g, opts, collection.num_node_labels);
  collection.feature_dim = static_cast<std::size_t>(opts.use_labels ? collection.num_node_labels : 0) +
                           (opts.use_degree ? 1 : 0);
}

std::string to_json_line(const AttributeGraph& g) {
  json j;
  j["m"] = g.num_vertices();
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v, e.weight});
  j["edges"] = std::move(edges);
  json rows = json::array();
  const Matrix& x = g.attributes();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < x.cols(); ++c) row.push_back(x(i, c));
    rows.push_back(std::move(row));
  }
  j["x"] = std::move(rows);
  j["label"] = g.graph_label() ? json(*g.graph_label()) : json(nullptr);
  if (g.node_labels()) j["node_labels"] = *g.node_labels();
  return j.dump();
}

AttributeGraph from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed graph record: ") + e.what());
  }
  try {
    const auto m = j.at("m").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
    }
    const auto& rows = j.at("x");
    if (rows.size() != m) throw FormatError("graph record has " + std::to_string(rows.size()) + " attribute rows for m=" + std::to_string(m));
    const std::size_t d = m > 0 ? rows.at(0).size() : 0;
    Matrix x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < m; ++i) {
      if (rows[i].size() != d) throw FormatError("ragged attribute rows in graph record");
      for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c].get<double>();
    }
    std::optional<int> label;
    if (j.contains("label") && !j["label"].is_null()) label = j["label"].get<int>();
    std::optional<std::vector<int>> node_labels;
    if (j.contains("node_labels")) node_labels = j["node_labels"].get<std::vector<int>>();
    return AttributeGraph::from_edges(m, edges, std::move(x), label, std::move(node_labels));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed graph record: ") + e.what());
  }
}

void write_graph_jsonl(std::ostream& out, const std::vector<AttributeGraph>& graphs) {
  for (const auto& g : graphs) out << to_json_line(g) << '\n';
}

void write_graph_jsonl(const fs::path& path, const std::vector<AttributeGraph>& graphs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_graph_jsonl(out, graphs);
}

GraphCollection read_graph_jsonl(const fs::path& path) {
  auto in = open_required(path);
  GraphCollection out;
  std::string line;
  std::size_t lineno = 0;
  int max_label = -1;
  int max_node_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.graphs.push_back(from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto& g = out.graphs.back();
    if (g.graph_label()) max_label = std::max(max_label, *g.graph_label());
    if (g.node_labels()) {
      for (int l : *g.node_labels()) max_node_label = std::max(max_node_label, l);
    }
  }
  out.num_classes = max_label + 1;
  out.num_node_labels = max_node_label + 1;
  for (int c = 0; c < out.num_classes; ++c) out.class_values.push_back(c);
  if (!out.graphs.empty()) {
    out.feature_dim = out.graphs.front().feature_dim();
    for (const auto& g : out.graphs) {
      if (g.feature_dim() != out.feature_dim) throw FormatError(path.string() + ": graphs disagree on feature dimension");
    }
  }
  return out;
}

}  // namespace gic
