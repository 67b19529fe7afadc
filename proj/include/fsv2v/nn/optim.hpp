#pragma once

#include <cstdint>

#include "fsv2v/nn/params.hpp"

namespace fsv2v::nn {

struct AdamOptions {
  double lr = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are created lazily per parameter name, so an optimizer can own any
// subset of a ParamSet. Parameters absent from `grads` are left untouched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ParamSet<float>& params, const ParamSet<float>& grads);

  const AdamOptions& options() const { return options_; }
  std::int64_t steps() const { return steps_; }
  const ParamSet<float>& first_moments() const { return m_; }
  const ParamSet<float>& second_moments() const { return v_; }

  void restore(std::int64_t steps, ParamSet<float> m, ParamSet<float> v) {
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamOptions options_;
  std::int64_t steps_ = 0;
  ParamSet<float> m_, v_;
};

// Global L2 norm over all tensors.
double global_norm(const ParamSet<float>& grads);

}  // namespace fsv2v::nn
