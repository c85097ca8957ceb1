#include "gic/coarsen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gic/error.hpp"

namespace gic {

WeightMode parse_weight_mode(const std::string& name) {
  if (name == "uniform") return WeightMode::uniform;
  if (name == "attribute-norm" || name == "attribute_norm") return WeightMode::attribute_norm;
  throw ConfigError("unknown vertex weight mode '" + name + "' (expected uniform or attribute-norm)");
}

std::string to_string(WeightMode mode) {
  return mode == WeightMode::uniform ? "uniform" : "attribute-norm";
}

VertexWeights vertex_weights(const Matrix& attributes, WeightMode mode) {
  VertexWeights w;
  w.mode = mode;
  switch (mode) {
    case WeightMode::uniform:
      w.values = Vector::Ones(attributes.rows());
      break;
    case WeightMode::attribute_norm:
      w.values = (attributes.rowwise().norm().array() + kAttributeNormEpsilon).matrix();
      break;
  }
  return w;
}

Matrix build_kernel(const Matrix& laplacian, const VertexWeights& w) {
  if (w.values.size() != laplacian.rows()) throw ShapeError("vertex weights do not match kernel size");
  return w.values.asDiagonal() * laplacian * w.values.asDiagonal();
}

Matrix build_cut_kernel(const Matrix& laplacian, const Vector& w) {
  const auto m = laplacian.rows();
  if (w.size() != m) throw ShapeError("vertex weights do not match Laplacian size");
  if ((w.array() <= 0.0).any()) throw DomainError("vertex weights must be positive");
  if (m == 0) return Matrix(0, 0);
  const Vector inv = w.cwiseInverse();
  const Vector inv_sqrt = inv.cwiseSqrt();
  const Matrix scaled = inv_sqrt.asDiagonal() * laplacian * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled, Eigen::EigenvaluesOnly);
  const double sigma = std::max(0.0, eig.eigenvalues().maxCoeff());
  Matrix k = -(inv.asDiagonal() * laplacian * inv.asDiagonal());
  k.diagonal() += sigma * inv;
  // Exact symmetry keeps EM bitwise equivariant under relabeling.
  return 0.5 * (k + k.transpose());
}

double kernel_distance(std::size_t i, std::span<const std::size_t> cluster, const Matrix& kernel, const Vector& w) {
  if (cluster.empty()) throw DomainError("kernel distance to an empty cluster");
  const auto ii = static_cast<Eigen::Index>(i);
  double wsum = 0.0;
  double cross = 0.0;
  double quad = 0.0;
  for (std::size_t j : cluster) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (!(w[jj] > 0.0)) throw DomainError("vertex weights must be positive");
    wsum += w[jj];
    cross += w[jj] * kernel(ii, jj);
    for (std::size_t k : cluster) {
      const auto kk = static_cast<Eigen::Index>(k);
      quad += w[jj] * w[kk] * kernel(jj, kk);
    }
  }
  const double d = kernel(ii, ii) - 2.0 * cross / wsum + quad / (wsum * wsum);
  return std::max(0.0, d);
}

namespace {

double quantize(double v) {
  constexpr double kScale = 1e9;
  const double q = std::nearbyint(v * kScale);
  return std::isfinite(q) ? q : v;
}

}  // namespace

namespace {

/// Dense ranks of keys: equal keys share a rank, ranks follow key order.
template <typename Key>
std::vector<std::size_t> dense_ranks(const std::vector<Key>& keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<std::size_t> rank(keys.size());
  std::size_t r = 0;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    if (p > 0 && keys[idx[p - 1]] < keys[idx[p]]) ++r;
    rank[idx[p]] = r;
  }
  return rank;
}

std::size_t distinct(const std::vector<std::size_t>& colors) {
  return colors.empty() ? 0 : *std::max_element(colors.begin(), colors.end()) + 1;
}

/// Colour refinement on the weighted kernel graph until the partition is
/// stable.
std::vector<std::size_t> refine(std::vector<std::size_t> colors, const Matrix& kernel) {
  const auto m = static_cast<std::size_t>(kernel.rows());
  using Signature = std::pair<std::size_t, std::vector<std::pair<double, std::size_t>>>;
  std::size_t count = distinct(colors);
  while (true) {
    std::vector<Signature> sig(m);
    for (std::size_t i = 0; i < m; ++i) {
      sig[i].first = colors[i];
      for (std::size_t j = 0; j < m; ++j) {
        const double kij = kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (j != i && kij != 0.0) sig[i].second.emplace_back(quantize(kij), colors[j]);
      }
      std::sort(sig[i].second.begin(), sig[i].second.end());
    }
    colors = dense_ranks(sig);
    const std::size_t next = distinct(colors);
    if (next == count) return colors;
    count = next;
  }
}

}  // namespace

std::vector<std::size_t> canonical_vertex_order(const Matrix& attributes, const Matrix& kernel) {
  const auto m = static_cast<std::size_t>(kernel.rows());
  std::vector<std::vector<double>> keys(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    auto& key = keys[i];
    key.push_back(quantize(kernel(ii, ii)));
    if (attributes.rows() == kernel.rows()) {
      for (Eigen::Index c = 0; c < attributes.cols(); ++c) key.push_back(quantize(attributes(ii, c)));
    }
  }
  std::vector<std::size_t> colors = refine(dense_ranks(keys), kernel);
  // Individualize the first vertex of the first tied class and refine again.
  while (distinct(colors) < m) {
    std::vector<std::size_t> size(m, 0);
    for (std::size_t c : colors) ++size[c];
    std::size_t tied = 0;
    while (size[tied] < 2) ++tied;
    const auto pick = static_cast<std::size_t>(std::find(colors.begin(), colors.end(), tied) - colors.begin());
    for (auto& c : colors) c = 2 * c + ((c == tied && &c != &colors[pick]) ? 1 : 0);
    colors = refine(dense_ranks(colors), kernel);
  }
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[colors[i]] = i;
  return order;
}

double em_surrogate_log_likelihood(const Matrix& kernel, const Vector& w, const Vector& mixture,
                                   const Matrix& mean_coefficients) {
  const Matrix ku = kernel * mean_coefficients;
  const Vector quad = (mean_coefficients.transpose() * ku).diagonal();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(static_cast<std::size_t>(mixture.size()));
    for (Eigen::Index c = 0; c < mixture.size(); ++c) {
      const double dist = std::max(0.0, kernel(i, i) - 2.0 * ku(i, c) + quad[c]);
      logits[static_cast<std::size_t>(c)] = std::log(mixture[c]) - 0.5 * w[i] * dist;
      mx = std::max(mx, logits[static_cast<std::size_t>(c)]);
    }
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - mx);
    ll += mx + std::log(acc);
  }
  return ll;
}

namespace {

struct EmRun {
  Matrix posteriors;
  Vector mixture;
  std::vector<double> trace;
};

/// k-means++ seeding over the canonical order; returns one vertex per cluster.
std::vector<std::size_t> seed_centers(const Matrix& kernel, const Vector& w, std::span<const std::size_t> order,
                                      std::size_t clusters, std::mt19937_64& rng) {
  const std::size_t m = order.size();
  std::vector<std::size_t> centers;
  std::vector<bool> taken(m, false);
  std::uniform_int_distribution<std::size_t> first(0, m - 1);
  const std::size_t p0 = first(rng);
  centers.push_back(order[p0]);
  taken[p0] = true;
  std::vector<double> best(m, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < clusters) {
    const auto c = static_cast<Eigen::Index>(centers.back());
    double total = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      const auto i = static_cast<Eigen::Index>(order[p]);
      const double d = w[i] * std::max(0.0, kernel(i, i) + kernel(c, c) - 2.0 * kernel(i, c));
      best[p] = std::min(best[p], d);
      if (!taken[p]) total += best[p];
    }
    std::size_t pick = m;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        if (taken[p]) continue;
        acc += best[p];
        if (acc >= target && best[p] > 0.0) {
          pick = p;
          break;
        }
      }
    }
    if (pick == m) {
      // All remaining candidates coincide with chosen centers (or rounding
      // left target past the end): take the farthest, then first in order.
      double far = -1.0;
      for (std::size_t p = 0; p < m; ++p) {
        if (!taken[p] && best[p] > far) {
          far = best[p];
          pick = p;
        }
      }
    }
    taken[pick] = true;
    centers.push_back(order[pick]);
  }
  return centers;
}

EmRun run_em(const Matrix& kernel, const Vector& w, const EmOptions& opt, std::span<const std::size_t> order,
             std::uint64_t seed) {
  const auto m = kernel.rows();
  const auto c2 = static_cast<Eigen::Index>(opt.num_clusters);
  std::mt19937_64 rng(seed);
  const auto centers = seed_centers(kernel, w, order, opt.num_clusters, rng);

  Matrix coeff = Matrix::Zero(m, c2);
  for (Eigen::Index c = 0; c < c2; ++c) coeff(static_cast<Eigen::Index>(centers[static_cast<std::size_t>(c)]), c) = 1.0;
  Vector mixture = Vector::Constant(c2, 1.0 / static_cast<double>(c2));

  EmRun run;
  run.posteriors = Matrix(m, c2);
  const Vector diag = kernel.diagonal();
  for (int it = 0; it < std::max(1, opt.max_iters); ++it) {
    // E-step
    const Matrix ku = kernel * coeff;
    const Vector quad = (coeff.transpose() * ku).diagonal();
    double ll = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < c2; ++c) {
        const double dist = std::max(0.0, diag[i] - 2.0 * ku(i, c) + quad[c]);
        const double l = std::log(mixture[c]) - 0.5 * w[i] * dist;
        run.posteriors(i, c) = l;
        mx = std::max(mx, l);
      }
      double acc = 0.0;
      for (Eigen::Index c = 0; c < c2; ++c) acc += std::exp(run.posteriors(i, c) - mx);
      const double lse = mx + std::log(acc);
      ll += lse;
      for (Eigen::Index c = 0; c < c2; ++c) run.posteriors(i, c) = std::exp(run.posteriors(i, c) - lse);
    }
    run.trace.push_back(ll);
    const std::size_t n = run.trace.size();
    if (n > 1 && run.trace[n - 1] - run.trace[n - 2] < opt.tol) break;
    if (it + 1 >= opt.max_iters) break;

    // M-step
    mixture = run.posteriors.colwise().sum().transpose() / static_cast<double>(m);
    for (Eigen::Index c = 0; c < c2; ++c) {
      const Vector weighted = run.posteriors.col(c).cwiseProduct(w);
      const double total = weighted.sum();
      if (total > 0.0) coeff.col(c) = weighted / total;
    }
  }
  run.mixture = run.posteriors.colwise().sum().transpose() / static_cast<double>(m);
  return run;
}

std::vector<std::vector<std::size_t>> members_of(std::span<const std::size_t> assignment, std::size_t clusters) {
  std::vector<std::vector<std::size_t>> out(clusters);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

/// Fills empty clusters by moving, from clusters with more than one member,
/// the vertex farthest from its own cluster mean.
void repair_empty_clusters(std::vector<std::size_t>& assignment, std::size_t clusters, const Matrix& kernel,
                           const Vector& w, std::span<const std::size_t> order) {
  for (;;) {
    auto members = members_of(assignment, clusters);
    const auto empty = std::find_if(members.begin(), members.end(), [](const auto& v) { return v.empty(); });
    if (empty == members.end()) return;
    double far = -1.0;
    std::size_t pick = assignment.size();
    for (std::size_t i : order) {
      const auto& own = members[assignment[i]];
      if (own.size() < 2) continue;
      const double d = kernel_distance(i, own, kernel, w);
      if (d > far) {
        far = d;
        pick = i;
      }
    }
    assignment[pick] = static_cast<std::size_t>(empty - members.begin());
  }
}

}  // namespace

CoarsenState em_cluster(const Matrix& kernel, const Vector& vertex_weights, const EmOptions& options) {
  const auto m = static_cast<std::size_t>(kernel.rows());
  if (!(options.precision > 0.0)) throw ConfigError("EM precision must be positive");
  // Cluster means are invariant to a common rescaling of w, so the precision
  // only sharpens the E-step.
  const Vector w = options.precision * vertex_weights;
  const std::size_t c2 = options.num_clusters;
  if (kernel.rows() != kernel.cols()) throw ShapeError("kernel must be square");
  if (static_cast<std::size_t>(w.size()) != m) throw ShapeError("vertex weights do not match kernel size");
  if (c2 == 0) throw ConfigError("cluster count must be at least 1");
  if (c2 > m) {
    throw ConfigError("cluster count " + std::to_string(c2) + " exceeds vertex count " + std::to_string(m));
  }
  std::vector<std::size_t> order = options.order;
  if (order.empty()) {
    order.resize(m);
    std::iota(order.begin(), order.end(), 0);
  }
  if (order.size() != m) throw ShapeError("seeding order length does not match vertex count");

  CoarsenState state;
  state.kernel = kernel;
  state.num_clusters = c2;

  if (c2 == m) {
    // One vertex per cluster, labelled in seeding order.
    state.assignments.resize(m);
    for (std::size_t p = 0; p < m; ++p) state.assignments[order[p]] = p;
    state.pooling = pooling_matrix(state.assignments, c2);
    state.posteriors = state.pooling;
    state.mixture = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    state.log_likelihood.push_back(em_surrogate_log_likelihood(kernel, w, state.mixture, state.pooling));
    return state;
  }

  EmRun best;
  bool have = false;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ULL;
    EmRun run = run_em(kernel, w, options, order, seed);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have = true;
    }
  }

  state.posteriors = std::move(best.posteriors);
  state.mixture = std::move(best.mixture);
  state.log_likelihood = std::move(best.trace);
  state.assignments.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    Eigen::Index arg = 0;
    const auto row = state.posteriors.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index c = 1; c < row.size(); ++c) {
      if (row[c] > row[arg]) arg = c;
    }
    state.assignments[i] = static_cast<std::size_t>(arg);
  }
  repair_empty_clusters(state.assignments, c2, kernel, w, order);
  state.pooling = pooling_matrix(state.assignments, c2);
  return state;
}

Matrix pooling_matrix(std::span<const std::size_t> assignments, std::size_t num_clusters) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(assignments.size()), static_cast<Eigen::Index>(num_clusters));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] >= num_clusters) throw IndexError("cluster label out of range");
    p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assignments[i])) = 1.0;
  }
  return p;
}

SparseMatrix coarsen_adjacency(const SparseMatrix& adjacency, std::span<const std::size_t> assignments,
                               std::size_t num_clusters) {
  if (static_cast<std::size_t>(adjacency.rows()) != assignments.size()) {
    throw ShapeError("pooling has " + std::to_string(assignments.size()) + " rows for " +
                     std::to_string(adjacency.rows()) + " vertices");
  }
  const auto c = static_cast<Eigen::Index>(num_clusters);
  Matrix out = Matrix::Zero(c, c);
  for (int k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      out(static_cast<Eigen::Index>(assignments[static_cast<std::size_t>(it.row())]),
          static_cast<Eigen::Index>(assignments[static_cast<std::size_t>(it.col())])) += it.value();
    }
  }
  return out.sparseView(0.0, 0.0);
}

AttributeGraph coarsen(const AttributeGraph& g, const CoarsenState& state) {
  const auto members = members_of(state.assignments, state.num_clusters);
  const Matrix& x = g.attributes();
  Matrix pooled(static_cast<Eigen::Index>(state.num_clusters), x.cols());
  for (std::size_t c = 0; c < state.num_clusters; ++c) {
    if (members[c].empty()) throw DomainError("cannot pool an empty cluster");
    for (Eigen::Index col = 0; col < x.cols(); ++col) {
      double best = x(static_cast<Eigen::Index>(members[c].front()), col);
      for (std::size_t i : members[c]) best = std::max(best, x(static_cast<Eigen::Index>(i), col));
      pooled(static_cast<Eigen::Index>(c), col) = best;
    }
  }
  return AttributeGraph(coarsen_adjacency(g.adjacency(), state.assignments, state.num_clusters), std::move(pooled),
                        g.graph_label());
}

ad::Var pool_max(ad::Var x, std::span<const std::size_t> assignments, std::size_t num_clusters) {
  if (x.shape().rows != assignments.size()) throw ShapeError("pooling assignments do not match attribute rows");
  const auto members = members_of(assignments, num_clusters);
  std::vector<ad::Var> rows;
  rows.reserve(num_clusters);
  for (const auto& mem : members) {
    if (mem.empty()) throw DomainError("cannot pool an empty cluster");
    rows.push_back(ad::max_reduce(ad::gather_rows(x, mem), ad::Axis::rows));
  }
  return rows.size() == 1 ? rows.front() : ad::concat(rows, ad::Axis::rows);
}

double cut_objective(std::span<const std::size_t> assignment, const Matrix& adjacency, const Vector& w,
                     std::size_t parts) {
  const auto m = static_cast<std::size_t>(adjacency.rows());
  if (assignment.size() != m || static_cast<std::size_t>(w.size()) != m) {
    throw ShapeError("partition does not cover the graph");
  }
  std::vector<double> links(parts, 0.0);
  std::vector<double> weight(parts, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (assignment[i] >= parts) throw IndexError("part label out of range");
    weight[assignment[i]] += w[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < m; ++j) {
      if (assignment[j] != assignment[i]) links[assignment[i]] += adjacency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < parts; ++c) {
    if (weight[c] <= 0.0) throw DomainError("partition has an empty part");
    total += links[c] / weight[c];
  }
  return total;
}

CutResult brute_force_min_cut(const Matrix& adjacency, const Vector& w, std::size_t parts) {
  const auto m = static_cast<std::size_t>(adjacency.rows());
  if (m > kMaxBruteForceVertices) {
    throw ConfigError("brute-force cut refuses m=" + std::to_string(m) + " (limit " +
                      std::to_string(kMaxBruteForceVertices) + ")");
  }
  if (parts == 0 || parts > m) throw ConfigError("part count must be in [1, m]");
  // Restricted growth strings enumerate each partition once, in lexicographic
  // order, and each is the lexicographically smallest labeling of its class.
  std::vector<std::size_t> a(m, 0);
  std::vector<std::size_t> prefix_max(m, 0);  // max label in a[0..i]
  CutResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (;;) {
    if (prefix_max[m - 1] + 1 == parts) {
      const double obj = cut_objective(a, adjacency, w, parts);
      if (obj < best.objective) {
        best.objective = obj;
        best.assignment = a;
      }
    }
    // Advance to the next restricted growth string with labels < parts.
    std::size_t i = m;
    while (i-- > 1) {
      if (a[i] <= prefix_max[i - 1] && a[i] + 1 < parts) break;
    }
    if (i == 0) break;
    ++a[i];
    prefix_max[i] = std::max(prefix_max[i - 1], a[i]);
    for (std::size_t j = i + 1; j < m; ++j) {
      a[j] = 0;
      prefix_max[j] = prefix_max[i];
    }
  }
  return best;
}

}  // namespace gic
