#include "gic/network.hpp"

#include <algorithm>
#include <cmath>

#include "gic/error.hpp"

namespace gic {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PreparedGraph prepare_graph(const AttributeGraph& g, std::size_t num_scales, KhopPolynomial poly) {
  PreparedGraph p;
  p.graph = g;
  p.scales = prepare_scales(g, num_scales, poly);
  if (g.graph_label()) {
    if (*g.graph_label() < 0) throw DomainError("graph label must be a non-negative class index");
    p.label = static_cast<std::size_t>(*g.graph_label());
  }
  return p;
}

std::vector<PreparedGraph> prepare_graphs(const std::vector<AttributeGraph>& graphs, std::size_t num_scales,
                                          KhopPolynomial poly) {
  std::vector<PreparedGraph> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(prepare_graph(g, num_scales, poly));
  return out;
}

CoarsenState pool_assignments(const SparseMatrix& adjacency, const Matrix& features, const EmOptions& options,
                              LaplacianKind laplacian_kind, WeightMode weight_mode) {
  const VertexWeights w = vertex_weights(features, weight_mode);
  const Matrix kernel = build_cut_kernel(laplacian(adjacency, laplacian_kind), w.values);
  EmOptions opt = options;
  opt.order = canonical_vertex_order(features, kernel);
  return em_cluster(kernel, w.values, opt);
}

Network::Network(const NetworkConfig& cfg, std::size_t feature_dim, std::size_t num_classes, std::mt19937_64& rng)
    : cfg_(cfg), stages_(parse_architecture(cfg.architecture)), feature_dim_(feature_dim) {
  cfg_.validate();
  if (feature_dim == 0) throw ConfigError("feature dimension must be positive");
  if (num_classes < 2) throw ConfigError("at least two classes are required");
  std::size_t width = feature_dim;
  for (const auto& s : stages_) {
    if (s.kind == StageKind::conv) {
      convs_.emplace_back(cfg_.num_scales, cfg_.num_components, width, s.width, rng);
      width = s.width;
    } else if (s.kind == StageKind::fc) {
      head_ = FcSoftmaxHead(cfg_.c_final * width, s.width, num_classes, rng);
    }
  }
}

std::size_t Network::pool_clusters(const StageSpec& stage, std::size_t m) const {
  if (m == 0) throw ShapeError("cannot pool an empty graph");
  if (!stage.ratio) return std::min(cfg_.c_final, m);
  // The small offset keeps products such as 0.1 * 30 from rounding up.
  const double c = std::ceil(*stage.ratio * static_cast<double>(m) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(c, 1.0)), 1, m);
}

EmOptions Network::pool_options(std::size_t index, std::size_t clusters) const {
  EmOptions opt;
  opt.num_clusters = clusters;
  opt.max_iters = cfg_.em_max_iters;
  opt.tol = cfg_.em_tol;
  opt.restarts = cfg_.em_restarts;
  opt.precision = cfg_.em_precision;
  opt.seed = mix_seed(cfg_.master_seed, 0x100 + index);
  return opt;
}

ForwardResult Network::forward(const PreparedGraph& g, ParamBinder& bind, const PoolTrace* frozen) const {
  ad::Tape& tape = bind.tape();
  if (g.graph.feature_dim() != feature_dim_) {
    throw ShapeError("graph has feature dimension " + std::to_string(g.graph.feature_dim()) + ", network expects " +
                     std::to_string(feature_dim_));
  }
  ForwardResult out;
  ad::Var x = tape.constant(ad::Tensor::from_matrix(g.graph.attributes()));
  SparseMatrix adj = g.graph.adjacency();
  std::vector<FieldPairs> owned;
  const std::vector<FieldPairs>* scales = &g.scales;
  std::size_t conv_index = 0;
  std::size_t pool_index = 0;

  for (const auto& stage : stages_) {
    switch (stage.kind) {
      case StageKind::conv: {
        if (scales == nullptr) {
          const auto m = static_cast<Eigen::Index>(adj.rows());
          owned = prepare_scales(AttributeGraph(adj, Matrix::Zero(m, 1)), cfg_.num_scales, cfg_.khop);
          scales = &owned;
        }
        x = convs_[conv_index++].forward(x, *scales, bind);
        break;
      }
      case StageKind::pool: {
        const std::size_t m = x.shape().rows;
        std::vector<std::size_t> assign;
        std::size_t clusters = 0;
        if (frozen != nullptr) {
          if (pool_index >= frozen->assignments.size()) throw ContractError("frozen trace has too few pooling stages");
          assign = frozen->assignments[pool_index];
          clusters = frozen->clusters[pool_index];
          if (assign.size() != m) throw ContractError("frozen assignment does not match vertex count");
        } else {
          clusters = pool_clusters(stage, m);
          if (clusters == 1) {
            assign.assign(m, 0);
          } else {
            assign = pool_assignments(adj, x.value().to_matrix(), pool_options(pool_index, clusters), cfg_.laplacian,
                                      cfg_.weight_mode)
                         .assignments;
          }
        }
        out.trace.assignments.push_back(assign);
        out.trace.clusters.push_back(clusters);
        x = pool_max(x, assign, clusters);
        adj = coarsen_adjacency(adj, assign, clusters);
        if (!stage.ratio && clusters < cfg_.c_final) {
          const std::size_t pad = cfg_.c_final - clusters;
          x = ad::concat({x, tape.constant(ad::Tensor(ad::Shape{pad, x.shape().cols}))}, ad::Axis::rows);
          adj.conservativeResize(static_cast<Eigen::Index>(cfg_.c_final), static_cast<Eigen::Index>(cfg_.c_final));
        }
        scales = nullptr;
        ++pool_index;
        break;
      }
      case StageKind::fc: {
        out.embedding = ad::reshape(x, ad::Shape{1, x.shape().size()});
        out.logits = head_.logits(out.embedding, bind);
        break;
      }
    }
  }
  return out;
}

ad::Tensor Network::logits(const PreparedGraph& g) const {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return forward(g, bind).logits.value();
}

ad::Tensor Network::embedding(const PreparedGraph& g) const {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return forward(g, bind).embedding.value();
}

std::size_t Network::predict(const PreparedGraph& g) const {
  const ad::Tensor z = logits(g);
  return static_cast<std::size_t>(std::max_element(z.data().begin(), z.data().end()) - z.data().begin());
}

std::vector<NamedParameter> Network::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect_parameters("conv" + std::to_string(i), out);
  head_.collect_parameters("fc", out);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

}  // namespace gic
