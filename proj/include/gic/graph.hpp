#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <optional>
#include <vector>

namespace gic {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 1.0;
};

/// Undirected graph with a symmetric non-negative weighted adjacency, one
/// attribute row per vertex and optional graph/vertex labels.
///
/// Immutable after construction; the constructor validates symmetry,
/// non-negativity and the attribute row count.
class AttributeGraph {
 public:
  AttributeGraph() = default;
  AttributeGraph(SparseMatrix adjacency, Matrix attributes,
                 std::optional<int> graph_label = std::nullopt,
                 std::optional<std::vector<int>> node_labels = std::nullopt);

  /// Builds the adjacency from an edge list. Each edge is symmetrized; repeated
  /// edges accumulate. A self loop (u == v) contributes its weight once to A_uu.
  static AttributeGraph from_edges(std::size_t num_vertices, const std::vector<Edge>& edges,
                                   Matrix attributes,
                                   std::optional<int> graph_label = std::nullopt,
                                   std::optional<std::vector<int>> node_labels = std::nullopt);

  std::size_t num_vertices() const { return static_cast<std::size_t>(adjacency_.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(attributes_.cols()); }

  const SparseMatrix& adjacency() const { return adjacency_; }
  Matrix dense_adjacency() const { return Matrix(adjacency_); }
  const Matrix& attributes() const { return attributes_; }
  const std::optional<int>& graph_label() const { return graph_label_; }
  const std::optional<std::vector<int>>& node_labels() const { return node_labels_; }

  /// Upper-triangle edge list (u <= v), ordered by (u, v).
  std::vector<Edge> edges() const;
  /// Row sums of the adjacency.
  Vector degrees() const;

  AttributeGraph with_attributes(Matrix attributes) const;
  AttributeGraph with_label(std::optional<int> label) const;

  /// Relabels vertices: vertex i of *this becomes vertex perm[i] of the result.
  AttributeGraph permuted(const std::vector<std::size_t>& perm) const;

 private:
  SparseMatrix adjacency_;
  Matrix attributes_;
  std::optional<int> graph_label_;
  std::optional<std::vector<int>> node_labels_;
};

enum class LaplacianKind { combinatorial, normalized };

/// Combinatorial L = D - A or normalized L = I - D^-1/2 A D^-1/2. Isolated
/// vertices use a zero D^-1/2 entry.
Matrix laplacian(const SparseMatrix& adjacency, LaplacianKind kind);
inline Matrix laplacian(const AttributeGraph& g, LaplacianKind kind) {
  return laplacian(g.adjacency(), kind);
}

/// Polynomial used to build the k-hop reachability operator.
enum class KhopPolynomial {
  power,            // A^k
  self_loop_power,  // (A + I)^k
};

/// psi_k(A). k must be >= 1.
Matrix khop_operator(const SparseMatrix& adjacency, int k,
                     KhopPolynomial poly = KhopPolynomial::power);
inline Matrix khop_operator(const AttributeGraph& g, int k,
                            KhopPolynomial poly = KhopPolynomial::power) {
  return khop_operator(g.adjacency(), k, poly);
}

/// Row-stochastic rescaling; all-zero rows stay zero.
Matrix normalize_khop(const Matrix& psi);

/// k-th scale receptive field around one reference vertex.
struct ReceptiveField {
  std::size_t reference = 0;
  std::vector<std::size_t> members;  // ascending vertex order, includes reference
  std::vector<double> weights;       // one per member, all > 0, sum to 1
  Matrix member_attributes;          // |members| x d
};

ReceptiveField receptive_field(const AttributeGraph& g, std::size_t v, const Matrix& psi_norm);

/// Receptive fields of every vertex for scale k, using psi_k and row
/// normalization.
std::vector<ReceptiveField> receptive_fields(const AttributeGraph& g, int k,
                                             KhopPolynomial poly = KhopPolynomial::power);

}  // namespace gic
