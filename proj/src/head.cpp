#include "gic/head.hpp"

#include <cmath>

#include "gic/error.hpp"

namespace gic {

FcSoftmaxHead::FcSoftmaxHead(std::size_t in_dim, std::size_t hidden, std::size_t num_classes, std::mt19937_64& rng) {
  if (in_dim == 0 || hidden == 0 || num_classes == 0) throw ConfigError("FC head dimensions must be positive");
  std::normal_distribution<double> w1(0.0, std::sqrt(2.0 / static_cast<double>(in_dim)));
  std::normal_distribution<double> w2(0.0, std::sqrt(1.0 / static_cast<double>(hidden)));
  hidden_weight_ = ad::Tensor(ad::Shape{in_dim, hidden});
  for (double& v : hidden_weight_.data()) v = w1(rng);
  hidden_bias_ = ad::Tensor(ad::Shape{1, hidden}, 0.0);
  out_weight_ = ad::Tensor(ad::Shape{hidden, num_classes});
  for (double& v : out_weight_.data()) v = w2(rng);
  out_bias_ = ad::Tensor(ad::Shape{1, num_classes}, 0.0);
}

ad::Var FcSoftmaxHead::logits(ad::Var x, ParamBinder& bind) const {
  if (x.shape() != ad::Shape{1, in_dim()}) {
    throw ShapeError("FC head expects input (1, " + std::to_string(in_dim()) + "), got " + x.shape().str());
  }
  const ad::Var h = ad::relu(ad::add(ad::matmul(x, bind(hidden_weight_)), bind(hidden_bias_)));
  return ad::add(ad::matmul(h, bind(out_weight_)), bind(out_bias_));
}

void FcSoftmaxHead::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) {
  out.push_back({prefix + ".hidden_weight", &hidden_weight_});
  out.push_back({prefix + ".hidden_bias", &hidden_bias_});
  out.push_back({prefix + ".out_weight", &out_weight_});
  out.push_back({prefix + ".out_bias", &out_bias_});
}

}  // namespace gic
