#pragma once

// Weight generation module E = (E_F, E_A, E_P): example features, attention
// over K examples, and the per-layer MLPs that emit dynamic SPADE weights.

#include <vector>

#include "fsv2v/model/config.hpp"
#include "fsv2v/model/layers.hpp"

namespace fsv2v::model {

// q^1..q^L; level l has half the resolution of level l-1.
template <typename T>
using LayerFeatures = std::vector<Var<T>>;

template <typename T>
struct AttentionResult {
  int examples = 0;   // K
  int positions = 0;  // N = attention_res^2
  // [K*N, N]: row k*N + i is key position i of example k, column j is the
  // query position. Each column sums to one.
  Var<T> alpha;
  std::vector<Var<T>> keys;  // a_k, each [C_a, N]
  Var<T> query;              // a_t, [C_a, N]
};

// Total attention mass per example (sum over all its N x N entries).
template <typename T>
std::vector<T> attention_mass(const AttentionResult<T>& att);

// Index of the example with the largest attention mass; 0 without attention.
template <typename T>
int select_example(const AttentionResult<T>* att);

// Weights of one dynamic SPADE branch. Kernels are [out, in/groups, k, k].
template <typename T>
struct LayerWeights {
  Var<T> s_kernel, s_bias;
  Var<T> gamma_kernel, gamma_bias;
  Var<T> beta_kernel, beta_bias;
  int groups = 1;  // for the γ/β convolutions
};

template <typename T>
using GeneratedWeights = std::vector<LayerWeights<T>>;

// Flattened size of θ_H^l for layer l (0-based).
int generated_size(const ModelConfig& cfg, int layer);

template <typename T>
LayerFeatures<T> extract_example_features(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> image, Var<T> semantics);

template <typename T>
AttentionResult<T> compute_attention(ParamBinder<T>& p, const ModelConfig& cfg,
                                     const std::vector<Var<T>>& example_semantics, Var<T> current_semantics);

// K = 1 returns features[0] untouched; K > 1 requires attention.
template <typename T>
LayerFeatures<T> aggregate_features(const ModelConfig& cfg, const std::vector<LayerFeatures<T>>& features,
                                    const AttentionResult<T>* attention);

template <typename T>
GeneratedWeights<T> generate_spade_weights(ParamBinder<T>& p, const ModelConfig& cfg, const LayerFeatures<T>& q);

// Splits a flat θ_H^l vector into its kernels and biases.
template <typename T>
LayerWeights<T> unpack_layer_weights(const ModelConfig& cfg, int layer, Var<T> flat);

void declare_weight_gen(std::vector<nn::ParamSpec>& specs, const ModelConfig& cfg);

// Bias for the last E_P layer: a freshly initialized static SPADE branch laid
// out like unpack_layer_weights expects (γ biases 1, other biases 0).
std::vector<float> static_spade_layout(const ModelConfig& cfg, int layer, std::uint64_t seed);

}  // namespace fsv2v::model
