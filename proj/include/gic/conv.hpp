#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "gic/autodiff.hpp"
#include "gic/graph.hpp"
#include "gic/params.hpp"

namespace gic {

/// log N(x; mu, diag(sigma^2) / a), summed over dimensions.
double weighted_log_gaussian(std::span<const double> x, std::span<const double> mu,
                             std::span<const double> sigma, double a);

/// Mixture parameters of one receptive-field scale. pi = softmax(alpha),
/// sigma = exp(log_sigma).
struct GaussianParams {
  ad::Tensor alpha;      // 1 x C1
  ad::Tensor mu;         // C1 x d
  ad::Tensor log_sigma;  // C1 x d

  std::size_t num_components() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
};

struct GaussianVars {
  ad::Var alpha;
  ad::Var mu;
  ad::Var log_sigma;
};

/// Receptive fields of one scale flattened to (reference, member, weight)
/// triples; every pair has a strictly positive weight.
struct FieldPairs {
  std::size_t num_fields = 0;
  std::vector<std::size_t> reference;
  std::vector<std::size_t> member;
  ad::Tensor weight;      // P x 1
  ad::Tensor log_weight;  // P x 1

  std::size_t size() const { return member.size(); }
};

FieldPairs make_field_pairs(std::span<const ReceptiveField> fields);
/// One field whose members are rows 0..n-1 of its own member_attributes.
FieldPairs make_local_pairs(const ReceptiveField& rf);

/// Recorded EI-GMM responsibilities Q (P x C1) for every field pair.
ad::Var responsibilities(ad::Var x, const FieldPairs& pairs, const GaussianVars& g);

/// Recorded Fisher-style encoding: for each field, Cat over components of
/// [dzeta/dmu_c, dzeta/dsigma_c]; shape num_fields x (2 d C1).
ad::Var encode_fields(ad::Var x, const FieldPairs& pairs, const GaussianVars& g);

/// Edge-induced GMM convolution: K scales with independent mixtures and one
/// linear filter over the concatenated K * C1 * 2d encoding, then ReLU.
class EiGmmConvLayer {
 public:
  EiGmmConvLayer() = default;
  /// mu ~ N(0, 1/sqrt(d)) per entry (variance), alpha = 0, log sigma = 0; filter uses
  /// He-normal initialization and zero bias.
  EiGmmConvLayer(std::size_t num_scales, std::size_t num_components, std::size_t in_dim,
                 std::size_t out_dim, std::mt19937_64& rng);

  std::size_t num_scales() const { return scales_.size(); }
  std::size_t num_components() const { return num_components_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

  std::size_t per_scale_feature_dim() const { return 2 * in_dim_ * num_components_; }
  std::size_t concat_feature_dim() const { return num_scales() * per_scale_feature_dim(); }
  std::size_t filter_parameter_count() const { return concat_feature_dim() * out_dim_; }

  /// scale is 1-based, matching the hop count.
  GaussianParams& scale(std::size_t k) { return scales_.at(k - 1); }
  const GaussianParams& scale(std::size_t k) const { return scales_.at(k - 1); }
  ad::Tensor& filter() { return filter_; }
  const ad::Tensor& filter() const { return filter_; }
  ad::Tensor& bias() { return bias_; }
  const ad::Tensor& bias() const { return bias_; }

  GaussianVars bind_scale(ParamBinder& bind, std::size_t k) const;

  /// Concatenated pre-filter encoding, m x concat_feature_dim().
  ad::Var encode(ad::Var x, std::span<const FieldPairs> scales, ParamBinder& bind) const;
  /// Full layer: ReLU(encode(x) * filter + bias).
  ad::Var forward(ad::Var x, std::span<const FieldPairs> scales, ParamBinder& bind) const;

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out);

 private:
  std::size_t num_components_ = 0;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  std::vector<GaussianParams> scales_;
  ad::Tensor filter_;  // concat_feature_dim x out_dim
  ad::Tensor bias_;    // 1 x out_dim
};

/// Scale-k field pairs for every vertex of g (k = 1..num_scales).
std::vector<FieldPairs> prepare_scales(const AttributeGraph& g, std::size_t num_scales,
                                       KhopPolynomial poly = KhopPolynomial::power);

/// Value-only helpers on a single receptive field.
Matrix responsibilities(const ReceptiveField& rf, const GaussianParams& params);
Vector encode_subgraph(const ReceptiveField& rf, const GaussianParams& params);
inline Matrix responsibilities(const ReceptiveField& rf, const EiGmmConvLayer& layer, std::size_t k) {
  return responsibilities(rf, layer.scale(k));
}
inline Vector encode_subgraph(const ReceptiveField& rf, const EiGmmConvLayer& layer, std::size_t k) {
  return encode_subgraph(rf, layer.scale(k));
}

/// Value-only layer application; graph structure is unchanged.
Matrix conv_forward(const AttributeGraph& g, const EiGmmConvLayer& layer,
                    KhopPolynomial poly = KhopPolynomial::power);

}  // namespace gic
