#pragma once

// Encoder / ConcatStyle / AdaIN baselines: a style vector from one example
// image drives an otherwise static SPADE generator.

#include <string>

#include "fsv2v/model/weight_gen.hpp"

namespace fsv2v::model {

// Parameter prefixes of the variant-specific parts.
std::string style_prefix(Variant v);
std::string static_spade_prefix(Variant v);

// SPADE branch input channels for the static baselines at layer l.
int static_spade_in_channels(const ModelConfig& cfg, int layer);

// Conv trunk (same shape as E_F) + global average pool + linear -> style_dim.
template <typename T>
Var<T> encode_style(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> image);

template <typename T>
LayerWeights<T> static_spade_weights(ParamBinder<T>& p, const ModelConfig& cfg, int layer);

// Instance-normalize, then out[c] = scale[c] * x̂[c] + bias[c].
template <typename T>
Var<T> adain_affine(Var<T> features, Var<T> scale, Var<T> bias);

// Per-layer MLP maps the style to (1 + scale, bias).
template <typename T>
Var<T> adain_modulate(ParamBinder<T>& p, const ModelConfig& cfg, int layer, Var<T> features, Var<T> style);

void declare_baseline(std::vector<nn::ParamSpec>& specs, const ModelConfig& cfg);

}  // namespace fsv2v::model
