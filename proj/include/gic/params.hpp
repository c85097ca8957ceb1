#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gic/autodiff.hpp"

namespace gic {

struct NamedParameter {
  std::string name;
  ad::Tensor* value;
};

/// Binds parameter tensors owned by layers to leaves of one tape, once each.
class ParamBinder {
 public:
  explicit ParamBinder(ad::Tape& tape, bool requires_grad = true)
      : tape_(tape), requires_grad_(requires_grad) {}

  ad::Var operator()(const ad::Tensor& param) {
    auto it = bound_.find(&param);
    if (it != bound_.end()) return it->second;
    ad::Var v = tape_.leaf(param, requires_grad_);
    bound_.emplace(&param, v);
    return v;
  }

  ad::Tape& tape() { return tape_; }

  /// Gradient of a bound parameter after tape.backward(); zeros if it was never
  /// used in the forward pass.
  ad::Tensor grad(const ad::Tensor& param) const {
    auto it = bound_.find(&param);
    if (it == bound_.end()) return ad::Tensor(param.shape());
    return tape_.grad(it->second);
  }

 private:
  ad::Tape& tape_;
  bool requires_grad_;
  std::unordered_map<const ad::Tensor*, ad::Var> bound_;
};

}  // namespace gic
