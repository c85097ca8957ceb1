#include "gic/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "gic/error.hpp"

namespace gic {

namespace {

constexpr double kSymmetryTol = 1e-12;

void validate(const SparseMatrix& a, const Matrix& x) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << "adjacency must be square, got " << a.rows() << "x" << a.cols();
    throw ShapeError(os.str());
  }
  if (x.rows() != a.rows()) {
    std::ostringstream os;
    os << "attributes have " << x.rows() << " rows for " << a.rows() << " vertices";
    throw ShapeError(os.str());
  }
  const SparseMatrix at = a.transpose();
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      if (!(it.value() >= 0.0)) throw DomainError("adjacency has a negative or NaN weight");
      const double mirror = at.coeff(it.row(), it.col());
      if (std::abs(mirror - it.value()) > kSymmetryTol * std::max(1.0, std::abs(it.value()))) {
        throw DomainError("adjacency is not symmetric");
      }
    }
  }
}

}  // namespace

AttributeGraph::AttributeGraph(SparseMatrix adjacency, Matrix attributes,
                               std::optional<int> graph_label,
                               std::optional<std::vector<int>> node_labels)
    : adjacency_(std::move(adjacency)),
      attributes_(std::move(attributes)),
      graph_label_(graph_label),
      node_labels_(std::move(node_labels)) {
  adjacency_.makeCompressed();
  validate(adjacency_, attributes_);
  if (node_labels_ && node_labels_->size() != num_vertices()) {
    throw ShapeError("node label count does not match vertex count");
  }
}

AttributeGraph AttributeGraph::from_edges(std::size_t num_vertices, const std::vector<Edge>& edges,
                                          Matrix attributes, std::optional<int> graph_label,
                                          std::optional<std::vector<int>> node_labels) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    if (e.u >= num_vertices || e.v >= num_vertices) {
      throw IndexError("edge references vertex outside [0, " + std::to_string(num_vertices) + ")");
    }
    trips.emplace_back(static_cast<int>(e.u), static_cast<int>(e.v), e.weight);
    if (e.u != e.v) trips.emplace_back(static_cast<int>(e.v), static_cast<int>(e.u), e.weight);
  }
  const auto n = static_cast<Eigen::Index>(num_vertices);
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  if (attributes.size() == 0 && attributes.rows() != n) attributes = Matrix(n, 0);
  return AttributeGraph(std::move(a), std::move(attributes), graph_label, std::move(node_labels));
}

std::vector<Edge> AttributeGraph::edges() const {
  std::vector<Edge> out;
  for (int k = 0; k < adjacency_.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency_, k); it; ++it) {
      // column-major: it.col() == k
      if (it.row() <= it.col() && it.value() != 0.0) {
        out.push_back({static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()),
                       it.value()});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  return out;
}

Vector AttributeGraph::degrees() const {
  Vector d = Vector::Zero(static_cast<Eigen::Index>(num_vertices()));
  for (int k = 0; k < adjacency_.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency_, k); it; ++it) d[it.row()] += it.value();
  }
  return d;
}

AttributeGraph AttributeGraph::with_attributes(Matrix attributes) const {
  return AttributeGraph(adjacency_, std::move(attributes), graph_label_, node_labels_);
}

AttributeGraph AttributeGraph::with_label(std::optional<int> label) const {
  return AttributeGraph(adjacency_, attributes_, label, node_labels_);
}

AttributeGraph AttributeGraph::permuted(const std::vector<std::size_t>& perm) const {
  const std::size_t m = num_vertices();
  if (perm.size() != m) throw ShapeError("permutation length does not match vertex count");
  std::vector<Edge> es = edges();
  for (auto& e : es) {
    e.u = perm[e.u];
    e.v = perm[e.v];
  }
  Matrix x(attributes_.rows(), attributes_.cols());
  for (std::size_t i = 0; i < m; ++i) x.row(static_cast<Eigen::Index>(perm[i])) = attributes_.row(static_cast<Eigen::Index>(i));
  std::optional<std::vector<int>> labels;
  if (node_labels_) {
    labels.emplace(m);
    for (std::size_t i = 0; i < m; ++i) (*labels)[perm[i]] = (*node_labels_)[i];
  }
  return from_edges(m, es, std::move(x), graph_label_, std::move(labels));
}

Matrix laplacian(const SparseMatrix& adjacency, LaplacianKind kind) {
  const Matrix a(adjacency);
  const Vector deg = a.rowwise().sum();
  if (kind == LaplacianKind::combinatorial) {
    Matrix l = -a;
    l.diagonal() += deg;
    return l;
  }
  Vector inv_sqrt(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i) inv_sqrt[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  Matrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  // Isolated vertices: D^-1/2 A D^-1/2 has a zero row, but L_ii must vanish for
  // a vertex without edges (L = D^-1/2 (D - A) D^-1/2 with D_ii = 0).
  for (Eigen::Index i = 0; i < deg.size(); ++i) {
    if (deg[i] == 0.0) l(i, i) = 0.0;
  }
  return l;
}

Matrix khop_operator(const SparseMatrix& adjacency, int k, KhopPolynomial poly) {
  if (k < 1) throw std::invalid_argument("k-hop order must be >= 1, got " + std::to_string(k));
  const auto m = adjacency.rows();
  SparseMatrix base = adjacency;
  if (poly == KhopPolynomial::self_loop_power) {
    SparseMatrix eye(m, m);
    eye.setIdentity();
    base = base + eye;
  }
  // Sparse products until fill-in passes half the matrix, then dense.
  const double dense_threshold = 0.5 * static_cast<double>(m) * static_cast<double>(m);
  SparseMatrix sparse_acc = base;
  int step = 1;
  for (; step < k; ++step) {
    if (static_cast<double>(sparse_acc.nonZeros()) > dense_threshold) break;
    sparse_acc = (sparse_acc * base).pruned(0.0);
  }
  if (step == k) return Matrix(sparse_acc);
  Matrix acc(sparse_acc);
  const Matrix dense_base(base);
  for (; step < k; ++step) acc = acc * dense_base;
  return acc;
}

Matrix normalize_khop(const Matrix& psi) {
  Matrix out = psi;
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    const double s = psi.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

ReceptiveField receptive_field(const AttributeGraph& g, std::size_t v, const Matrix& psi_norm) {
  const std::size_t m = g.num_vertices();
  if (v >= m) {
    throw IndexError("vertex " + std::to_string(v) + " out of range [0, " + std::to_string(m) + ")");
  }
  if (static_cast<std::size_t>(psi_norm.rows()) != m || static_cast<std::size_t>(psi_norm.cols()) != m) {
    throw ShapeError("k-hop operator shape does not match graph");
  }
  ReceptiveField rf;
  rf.reference = v;
  const auto row = static_cast<Eigen::Index>(v);
  bool self_present = false;
  for (std::size_t j = 0; j < m; ++j) {
    const double a = psi_norm(row, static_cast<Eigen::Index>(j));
    if (a != 0.0) {
      rf.members.push_back(j);
      rf.weights.push_back(a);
      if (j == v) self_present = true;
    }
  }
  if (!self_present) {
    const auto pos = std::lower_bound(rf.members.begin(), rf.members.end(), v) - rf.members.begin();
    const double eps_self = 1.0 / static_cast<double>(rf.members.size() + 1);
    rf.members.insert(rf.members.begin() + pos, v);
    rf.weights.insert(rf.weights.begin() + pos, eps_self);
    double total = 0.0;
    for (double w : rf.weights) total += w;
    for (double& w : rf.weights) w /= total;
  }
  rf.member_attributes.resize(static_cast<Eigen::Index>(rf.members.size()), g.attributes().cols());
  for (std::size_t r = 0; r < rf.members.size(); ++r) {
    rf.member_attributes.row(static_cast<Eigen::Index>(r)) =
        g.attributes().row(static_cast<Eigen::Index>(rf.members[r]));
  }
  return rf;
}

std::vector<ReceptiveField> receptive_fields(const AttributeGraph& g, int k, KhopPolynomial poly) {
  const Matrix psi = normalize_khop(khop_operator(g, k, poly));
  std::vector<ReceptiveField> out;
  out.reserve(g.num_vertices());
  for (std::size_t v = 0; v < g.num_vertices(); ++v) out.push_back(receptive_field(g, v, psi));
  return out;
}

}  // namespace gic
