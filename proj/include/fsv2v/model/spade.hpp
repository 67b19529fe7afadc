#pragma once

// Intermediate image synthesis network H: a learned-constant main branch whose
// normalization layers are denormalized by SPADE branches.

#include <optional>

#include "fsv2v/model/weight_gen.hpp"

namespace fsv2v::model {

template <typename T>
struct SpadeResult {
  Var<T> features;  // p_H^l
  Var<T> p_s;       // p_S^l
  Var<T> gamma, beta;
};

// p_hat is already normalized. semantics is s_t at any resolution; it is
// resized to the layer. Without p_s_prev the branch input is s_t alone.
template <typename T>
SpadeResult<T> dynamic_spade_layer(Var<T> p_hat, std::optional<Var<T>> p_s_prev, Var<T> semantics,
                                   const LayerWeights<T>& weights);

// What the examples contribute to H: generated weights (full) or a style code
// (baselines).
template <typename T>
struct Conditioning {
  GeneratedWeights<T> weights;
  std::optional<Var<T>> style;
};

// s_window holds s_{t-τ..t} (oldest first), x_window holds x̃_{t-τ..t-1};
// missing history is passed as zeros. Returns h̃_t in [0,1].
template <typename T>
Var<T> synthesize_intermediate(ParamBinder<T>& p, const ModelConfig& cfg, const std::vector<Var<T>>& s_window,
                               const std::vector<Var<T>>& x_window, const Conditioning<T>& cond);

void declare_synthesis(std::vector<nn::ParamSpec>& specs, const ModelConfig& cfg);

}  // namespace fsv2v::model
