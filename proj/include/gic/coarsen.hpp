#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gic/autodiff.hpp"
#include "gic/graph.hpp"

namespace gic {

enum class WeightMode { uniform, attribute_norm };

WeightMode parse_weight_mode(const std::string& name);
std::string to_string(WeightMode mode);

/// Per-vertex influence factors, all strictly positive.
struct VertexWeights {
  WeightMode mode = WeightMode::uniform;
  Vector values;
};

inline constexpr double kAttributeNormEpsilon = 1e-3;

/// uniform: w_i = 1; attribute_norm: w_i = 1e-3 + ||X_i||_2.
VertexWeights vertex_weights(const Matrix& attributes, WeightMode mode);

/// diag(w) L diag(w).
Matrix build_kernel(const Matrix& laplacian, const VertexWeights& w);

/// sigma W^-1 - W^-1 L W^-1 with sigma = lambda_max(W^-1/2 L W^-1/2), the
/// smallest shift that keeps the kernel PSD. Weighted kernel k-means on this
/// kernel minimizes sum_c links(V_c, V \ V_c) / w(V_c) + const.
Matrix build_cut_kernel(const Matrix& laplacian, const Vector& w);

/// ||phi(v_i) - mu_c||^2 for the w-weighted kernel mean of `cluster`, clamped
/// at 0.
double kernel_distance(std::size_t i, std::span<const std::size_t> cluster, const Matrix& kernel,
                       const Vector& w);

/// Vertex order used to seed clustering. Vertices are keyed by kernel diagonal
/// and attributes, then split by colour refinement over the kernel entries;
/// remaining ties are broken by individualization. Relabeling the graph
/// relabels the order whenever the tie breaks fall inside automorphism orbits.
std::vector<std::size_t> canonical_vertex_order(const Matrix& attributes, const Matrix& kernel);

struct EmOptions {
  std::size_t num_clusters = 1;
  int max_iters = 10;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int restarts = 3;
  /// Isotropic precision beta of each component, N(mu_c, I / (beta w_i)).
  double precision = 1.0;
  /// Seeding order; empty means 0..m-1.
  std::vector<std::size_t> order;
};

struct CoarsenState {
  Matrix kernel;
  std::size_t num_clusters = 0;
  Matrix posteriors;                    // m x C2, rows sum to 1
  Vector mixture;                       // C2
  std::vector<std::size_t> assignments; // hard labels
  Matrix pooling;                       // m x C2 binary
  /// Surrogate log-likelihood after each E-step of the kept run.
  std::vector<double> log_likelihood;
};

/// Surrogate likelihood sum_i ln sum_c pi_c exp(-(w_i/2) dist^2(i, c)) for
/// means given as coefficient columns (m x C2, each column sums to 1).
double em_surrogate_log_likelihood(const Matrix& kernel, const Vector& w, const Vector& mixture,
                                   const Matrix& mean_coefficients);

/// Kernel-space EM for the vertex-induced GMM followed by hard
/// quantification. Keeps the restart with the best final surrogate
/// likelihood; the recorded trace uses the weights precision * w.
CoarsenState em_cluster(const Matrix& kernel, const Vector& w, const EmOptions& options);

/// Binary pooling matrix from hard labels.
Matrix pooling_matrix(std::span<const std::size_t> assignments, std::size_t num_clusters);

/// P^T A P plus elementwise max of attributes per cluster.
AttributeGraph coarsen(const AttributeGraph& g, const CoarsenState& state);
SparseMatrix coarsen_adjacency(const SparseMatrix& adjacency, std::span<const std::size_t> assignments,
                               std::size_t num_clusters);
/// Recorded max pooling: row c is the elementwise max of rows in cluster c.
ad::Var pool_max(ad::Var x, std::span<const std::size_t> assignments, std::size_t num_clusters);

/// sum_c links(V_c, V \ V_c) / w(V_c) for a hard assignment into `parts`.
double cut_objective(std::span<const std::size_t> assignment, const Matrix& adjacency, const Vector& w,
                     std::size_t parts);

struct CutResult {
  std::vector<std::size_t> assignment;
  double objective = 0.0;
};

inline constexpr std::size_t kMaxBruteForceVertices = 12;

/// Exact minimizer of cut_objective over surjective assignments. Ties go to
/// the lexicographically smallest assignment.
CutResult brute_force_min_cut(const Matrix& adjacency, const Vector& w, std::size_t parts);

}  // namespace gic
