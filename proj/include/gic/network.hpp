#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gic/autodiff.hpp"
#include "gic/coarsen.hpp"
#include "gic/config.hpp"
#include "gic/conv.hpp"
#include "gic/graph.hpp"
#include "gic/head.hpp"
#include "gic/params.hpp"

namespace gic {

/// A graph with its level-0 receptive fields precomputed; the fields depend on
/// structure only, so they are reused across epochs.
struct PreparedGraph {
  AttributeGraph graph;
  std::vector<FieldPairs> scales;
  std::size_t label = 0;
};

PreparedGraph prepare_graph(const AttributeGraph& g, std::size_t num_scales, KhopPolynomial poly);
std::vector<PreparedGraph> prepare_graphs(const std::vector<AttributeGraph>& graphs, std::size_t num_scales,
                                          KhopPolynomial poly);

/// Hard assignments of every pooling stage of one forward pass. When passed
/// back in, the stored assignments replace EM so the forward map is smooth in
/// the parameters.
struct PoolTrace {
  std::vector<std::vector<std::size_t>> assignments;
  std::vector<std::size_t> clusters;
};

struct ForwardResult {
  ad::Var logits;     // 1 x num_classes
  ad::Var embedding;  // 1 x (c_final * last conv width), the FC input
  PoolTrace trace;
};

class Network {
 public:
  Network() = default;
  /// Parameters are drawn from rng in stage order.
  Network(const NetworkConfig& cfg, std::size_t feature_dim, std::size_t num_classes, std::mt19937_64& rng);

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<StageSpec>& stages() const { return stages_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_classes() const { return head_.num_classes(); }
  std::size_t depth() const { return network_depth(stages_); }

  const std::vector<EiGmmConvLayer>& conv_layers() const { return convs_; }
  std::vector<EiGmmConvLayer>& conv_layers() { return convs_; }
  const FcSoftmaxHead& head() const { return head_; }
  FcSoftmaxHead& head() { return head_; }

  /// Recorded forward pass. With `frozen`, pooling reuses its assignments.
  ForwardResult forward(const PreparedGraph& g, ParamBinder& bind, const PoolTrace* frozen = nullptr) const;

  /// Value-only logits and embedding.
  ad::Tensor logits(const PreparedGraph& g) const;
  ad::Tensor embedding(const PreparedGraph& g) const;
  std::size_t predict(const PreparedGraph& g) const;

  /// Named parameters in a fixed order.
  std::vector<NamedParameter> parameters();
  std::size_t parameter_count();

  /// Cluster count of pooling stage `ratio` on m vertices.
  std::size_t pool_clusters(const StageSpec& stage, std::size_t m) const;
  /// EM options used at pooling stage `index` (counted among pooling stages).
  EmOptions pool_options(std::size_t index, std::size_t clusters) const;

 private:
  NetworkConfig cfg_;
  std::vector<StageSpec> stages_;
  std::size_t feature_dim_ = 0;
  std::vector<EiGmmConvLayer> convs_;
  FcSoftmaxHead head_;
};

/// Hard clustering of one pooling stage from the current graph and features.
CoarsenState pool_assignments(const SparseMatrix& adjacency, const Matrix& features, const EmOptions& options,
                              LaplacianKind laplacian_kind, WeightMode weight_mode);

/// splitmix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace gic
