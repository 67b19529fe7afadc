#pragma once

// Loss terms of the adversarial video objective. All return scalar [1] Vars.

#include <vector>

#include "fsv2v/nn/ops.hpp"

namespace fsv2v::training {

using nn::Var;

// Least-squares discriminator loss: mean (real - 1)^2 + mean fake^2.
template <typename T>
Var<T> lsgan_discriminator_loss(Var<T> real_logits, Var<T> fake_logits);

// Least-squares generator loss: mean (fake - 1)^2.
template <typename T>
Var<T> lsgan_generator_loss(Var<T> fake_logits);

// Pixel L1 plus the mean L1 over discriminator activations; the real
// activations are treated as constants.
template <typename T>
Var<T> feature_matching_loss(Var<T> fake, Var<T> real, const std::vector<Var<T>>& fake_features,
                             const std::vector<Var<T>>& real_features);

// mean |flow - target|.
template <typename T>
Var<T> flow_loss(Var<T> flow, Var<T> target);

// mean |warp(previous, flow) - current| on ground-truth frames.
template <typename T>
Var<T> warp_loss(Var<T> previous, Var<T> flow, Var<T> current);

}  // namespace fsv2v::training
