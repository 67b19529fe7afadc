#include "fsv2v/nn/optim.hpp"

#include <cmath>

namespace fsv2v::nn {

void Adam::step(ParamSet<float>& params, const ParamSet<float>& grads) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& [name, g] : grads) {
    Tensor<float>& w = params.at(name);
    if (g.shape() != w.shape()) {
      throw DimensionError("gradient for '" + name + "' has shape " + to_string(g.shape()) + ", parameter " +
                           to_string(w.shape()));
    }
    if (!m_.contains(name)) {
      m_.insert(name, Tensor<float>(w.shape()));
      v_.insert(name, Tensor<float>(w.shape()));
    }
    Tensor<float>& m = m_.at(name);
    Tensor<float>& v = v_.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] = static_cast<float>(w[i] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

double global_norm(const ParamSet<float>& grads) {
  double s = 0;
  for (const auto& [name, g] : grads)
    for (float v : g.values()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

}  // namespace fsv2v::nn
