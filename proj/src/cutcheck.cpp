#include "gic/cutcheck.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gic/coarsen.hpp"
#include "gic/network.hpp"

namespace gic {

AttributeGraph random_connected_graph(std::size_t m, double edge_probability, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Edge> edges;
  std::vector<std::vector<bool>> present(m, std::vector<bool>(m, false));
  for (std::size_t v = 1; v < m; ++v) {
    const std::size_t u = std::uniform_int_distribution<std::size_t>(0, v - 1)(rng);
    edges.push_back({u, v, 1.0});
    present[u][v] = true;
  }
  std::bernoulli_distribution extra(edge_probability);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t v = u + 1; v < m; ++v) {
      if (!present[u][v] && extra(rng)) edges.push_back({u, v, 1.0});
    }
  }
  return AttributeGraph::from_edges(m, edges, Matrix::Zero(static_cast<Eigen::Index>(m), 1));
}

namespace {

CutCheckRow check_one(const AttributeGraph& g, const Vector& w, const CutCheckOptions& opt, std::uint64_t seed) {
  CutCheckRow row;
  row.m = g.num_vertices();
  row.clusters = opt.clusters;
  if (row.m > kMaxBruteForceVertices || row.m < opt.clusters) {
    row.skipped = true;
    return row;
  }
  const Matrix adj = g.dense_adjacency();
  const Matrix kernel = build_cut_kernel(laplacian(g.adjacency(), LaplacianKind::combinatorial), w);
  EmOptions em;
  em.num_clusters = opt.clusters;
  em.max_iters = opt.max_iters;
  em.restarts = opt.restarts;
  em.precision = opt.precision;
  em.seed = seed;
  em.order = canonical_vertex_order(Matrix(), kernel);
  const CoarsenState state = em_cluster(kernel, w, em);
  row.em_objective = cut_objective(state.assignments, adj, w, opt.clusters);
  row.optimal_objective = brute_force_min_cut(adj, w, opt.clusters).objective;
  constexpr double kZero = 1e-12;
  if (row.optimal_objective <= kZero) {
    row.ratio = row.em_objective <= kZero ? 1.0 : std::numeric_limits<double>::infinity();
  } else {
    row.ratio = row.em_objective / row.optimal_objective;
  }
  row.within = row.ratio <= 1.0 + opt.tolerance + 1e-12;
  return row;
}

}  // namespace

CutCheckSummary run_cut_check(const std::vector<AttributeGraph>& graphs, const CutCheckOptions& options) {
  CutCheckSummary s;
  std::size_t eval_uniform = 0, within_uniform = 0, eval_random = 0, within_random = 0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto m = static_cast<Eigen::Index>(graphs[i].num_vertices());
    std::mt19937_64 rng(mix_seed(options.seed, 0xC0770000ULL + i));
    std::uniform_real_distribution<double> unit(0.5, 2.0);
    Vector random_w(m);
    for (Eigen::Index v = 0; v < m; ++v) random_w[v] = unit(rng);
    for (int mode = 0; mode < 2; ++mode) {
      CutCheckRow row = check_one(graphs[i], mode == 0 ? Vector(Vector::Ones(m)) : random_w, options,
                                  mix_seed(options.seed, 2 * i + static_cast<std::size_t>(mode)));
      row.graph = i;
      row.weights = mode == 0 ? "uniform" : "random";
      if (!row.skipped) {
        ++s.evaluated;
        (mode == 0 ? eval_uniform : eval_random)++;
        if (row.within) {
          ++s.within;
          (mode == 0 ? within_uniform : within_random)++;
        }
      }
      s.rows.push_back(std::move(row));
    }
  }
  auto frac = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  s.fraction = frac(s.within, s.evaluated);
  s.fraction_uniform = frac(within_uniform, eval_uniform);
  s.fraction_random = frac(within_random, eval_random);
  return s;
}

CutCheckSummary run_cut_check(const CutCheckOptions& options) {
  std::mt19937_64 rng(mix_seed(options.seed, 0x6A0000ULL));
  std::vector<AttributeGraph> graphs;
  graphs.reserve(options.count);
  std::uniform_int_distribution<std::size_t> size(options.min_vertices, options.max_vertices);
  for (std::size_t i = 0; i < options.count; ++i) {
    const std::size_t m = size(rng);
    graphs.push_back(random_connected_graph(m, options.edge_probability, rng()));
  }
  return run_cut_check(graphs, options);
}

nlohmann::json to_json(const CutCheckRow& row) {
  nlohmann::json j{{"graph", row.graph}, {"m", row.m}, {"C2", row.clusters}, {"weights", row.weights}};
  if (row.skipped) {
    j["skipped"] = true;
    return j;
  }
  j["em_objective"] = row.em_objective;
  j["optimal_objective"] = row.optimal_objective;
  j["ratio"] = std::isfinite(row.ratio) ? nlohmann::json(row.ratio) : nlohmann::json("inf");
  j["within_tolerance"] = row.within;
  return j;
}

}  // namespace gic
