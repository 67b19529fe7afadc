#pragma once

// Small helpers shared by the networks: parameter-named conv and linear layers.

#include <string>

#include "fsv2v/nn/ops.hpp"
#include "fsv2v/nn/params.hpp"

namespace fsv2v::model {

using nn::ParamBinder;
using nn::Var;

template <typename T>
Var<T> conv(ParamBinder<T>& p, const std::string& name, Var<T> x, int stride = 1) {
  return nn::conv2d(x, p(name + ".weight"), p(name + ".bias"), stride);
}

template <typename T>
Var<T> linear(ParamBinder<T>& p, const std::string& name, Var<T> x) {
  return nn::fully_connected(x, p(name + ".weight"), p(name + ".bias"));
}

template <typename T>
Var<T> flatten(Var<T> x) {
  return nn::reshape(x, {static_cast<int>(x.size())});
}

}  // namespace fsv2v::model
