#pragma once

#include <random>
#include <string>
#include <vector>

#include "gic/autodiff.hpp"
#include "gic/params.hpp"

namespace gic {

/// Fully connected classifier: logits = ReLU(x W1 + b1) W2 + b2 for a 1 x in
/// input row.
class FcSoftmaxHead {
 public:
  FcSoftmaxHead() = default;
  FcSoftmaxHead(std::size_t in_dim, std::size_t hidden, std::size_t num_classes, std::mt19937_64& rng);

  std::size_t in_dim() const { return hidden_weight_.rows(); }
  std::size_t hidden() const { return hidden_weight_.cols(); }
  std::size_t num_classes() const { return out_weight_.cols(); }

  ad::Var logits(ad::Var x, ParamBinder& bind) const;
  ad::Var loss(ad::Var x, std::size_t target, ParamBinder& bind) const {
    return ad::softmax_cross_entropy(logits(x, bind), target);
  }

  ad::Tensor& hidden_weight() { return hidden_weight_; }
  ad::Tensor& hidden_bias() { return hidden_bias_; }
  ad::Tensor& out_weight() { return out_weight_; }
  ad::Tensor& out_bias() { return out_bias_; }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out);

 private:
  ad::Tensor hidden_weight_;
  ad::Tensor hidden_bias_;
  ad::Tensor out_weight_;
  ad::Tensor out_bias_;
};

}  // namespace gic
