#pragma once

// Patch discriminators: per-frame image D on [x, s] and temporal D on three
// consecutive frames.

#include "fsv2v/model/config.hpp"
#include "fsv2v/model/layers.hpp"

namespace fsv2v::model {

template <typename T>
struct DiscOutput {
  std::vector<Var<T>> features;  // intermediate activations, for feature matching
  Var<T> logits;                 // [1,h,w] patch scores
};

template <typename T>
DiscOutput<T> image_discriminator(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> image, Var<T> semantics);

template <typename T>
DiscOutput<T> temporal_discriminator(ParamBinder<T>& p, const ModelConfig& cfg, const std::vector<Var<T>>& frames);

inline constexpr int kTemporalFrames = 3;

void declare_discriminators(std::vector<nn::ParamSpec>& specs, const ModelConfig& cfg);

}  // namespace fsv2v::model
