#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gic/graph.hpp"

namespace gic {

struct CutCheckOptions {
  std::size_t count = 100;
  std::size_t min_vertices = 3;
  std::size_t max_vertices = 8;
  std::size_t clusters = 2;
  double edge_probability = 0.35;
  std::uint64_t seed = 0;
  int restarts = 5;
  int max_iters = 10;
  double precision = 8.0;
  double tolerance = 0.10;
};

struct CutCheckRow {
  std::size_t graph = 0;
  std::size_t m = 0;
  std::size_t clusters = 0;
  std::string weights;  // "uniform" or "random"
  bool skipped = false;
  double em_objective = 0.0;
  double optimal_objective = 0.0;
  double ratio = 0.0;  // 1 when both objectives are 0
  bool within = false;
};

struct CutCheckSummary {
  std::vector<CutCheckRow> rows;
  std::size_t evaluated = 0;
  std::size_t within = 0;
  double fraction = 0.0;
  double fraction_uniform = 0.0;
  double fraction_random = 0.0;
};

/// Connected graph on m vertices: a random spanning tree plus independent
/// extra edges, all of weight 1.
AttributeGraph random_connected_graph(std::size_t m, double edge_probability, std::uint64_t seed);

/// Checks each graph twice, with unit and with random vertex weights.
CutCheckSummary run_cut_check(const std::vector<AttributeGraph>& graphs, const CutCheckOptions& options);
/// Generates options.count seeded graphs first.
CutCheckSummary run_cut_check(const CutCheckOptions& options);

nlohmann::json to_json(const CutCheckRow& row);

}  // namespace gic
