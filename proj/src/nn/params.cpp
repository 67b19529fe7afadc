#include "fsv2v/nn/params.hpp"

#include <cmath>
#include <random>

namespace fsv2v::nn {

void declare_conv(std::vector<ParamSpec>& specs, const std::string& prefix, int in, int out, int kernel,
                  double gain) {
  specs.push_back({prefix + ".weight", {out, in, kernel, kernel}, InitKind::he_normal, gain});
  specs.push_back({prefix + ".bias", {out}, InitKind::zeros, 0.0});
}

void declare_linear(std::vector<ParamSpec>& specs, const std::string& prefix, int in, int out, double gain) {
  specs.push_back({prefix + ".weight", {out, in}, InitKind::he_normal, gain});
  specs.push_back({prefix + ".bias", {out}, InitKind::zeros, 0.0});
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ParamSet<float> initialize(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamSet<float> params;
  for (const auto& spec : specs) {
    Tensor<float> t(spec.shape);
    std::mt19937_64 rng(fnv1a(spec.name, seed ^ 0x9e3779b97f4a7c15ULL));
    switch (spec.init) {
      case InitKind::zeros:
        break;
      case InitKind::constant:
        t.fill(static_cast<float>(spec.value));
        break;
      case InitKind::normal: {
        std::normal_distribution<double> dist(0.0, spec.value);
        for (auto& v : t.values()) v = static_cast<float>(dist(rng));
        break;
      }
      case InitKind::he_normal: {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < spec.shape.size(); ++i) fan_in *= static_cast<std::size_t>(spec.shape[i]);
        // Leaky-ReLU(0.2) gain.
        const double std = spec.value * std::sqrt(2.0 / (1.0 + 0.04) / static_cast<double>(fan_in));
        std::normal_distribution<double> dist(0.0, std);
        for (auto& v : t.values()) v = static_cast<float>(dist(rng));
        break;
      }
    }
    params.insert(spec.name, std::move(t));
  }
  return params;
}

}  // namespace fsv2v::nn
