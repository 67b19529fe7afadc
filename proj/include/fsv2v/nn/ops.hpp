#pragma once

// Differentiable primitives. Images and feature maps are [C,H,W]; vectors are
// rank 1; matrices rank 2. Shape mismatches throw DimensionError naming both
// shapes.

#include <optional>
#include <vector>

#include "fsv2v/kernels/kernels.hpp"
#include "fsv2v/nn/graph.hpp"

namespace fsv2v::nn {

using kernels::NormMode;

// Zero-padded "same" convolution (odd kernels), cross-correlation semantics.
// kernel is [Cout, Cin/groups, kh, kw]; bias is [Cout] or absent.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, std::optional<Var<T>> bias, int stride = 1, int groups = 1);
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, int stride = 1, int groups = 1) {
  return conv2d(input, kernel, std::optional<Var<T>>(bias), stride, groups);
}
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, std::nullopt_t, int stride = 1, int groups = 1) {
  return conv2d(input, kernel, std::optional<Var<T>>(), stride, groups);
}

// y = W x + b with x [n], W [m,n], b [m].
template <typename T>
Var<T> fully_connected(Var<T> input, Var<T> weight, Var<T> bias);

// Row-major product of rank-2 operands, optionally transposed.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false);

// Samples image at p + flow(p) with bilinear interpolation. flow is [2,H,W] in
// pixels (x then y); sampling coordinates are clamped to the border.
template <typename T>
Var<T> bilinear_warp(Var<T> image, Var<T> flow);

// Max-stabilized softmax of a rank-1 or rank-2 tensor along `axis`.
template <typename T>
Var<T> softmax(Var<T> logits, int axis);

// Per-channel zero mean / unit variance. Accepts [C,H,W] (one sample) or [N,C,H,W].
template <typename T>
Var<T> normalize_features(Var<T> input, NormMode mode, T eps = T(1e-5));

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope = T(0.2));
template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> add_scalar(Var<T> x, T c);
template <typename T>
Var<T> scale(Var<T> x, T c);

// out[c] = scale[c] * x[c] + bias[c] for x [C,H,W], scale/bias [C].
template <typename T>
Var<T> affine_channels(Var<T> x, Var<T> scale, Var<T> bias);

// (1 - mask) * base + mask * over, with mask [1,H,W] broadcast over channels.
template <typename T>
Var<T> matte(Var<T> base, Var<T> over, Var<T> mask);

// Concatenates along the leading axis.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// Contiguous range of the flattened tensor, reshaped.
template <typename T>
Var<T> slice(Var<T> x, std::size_t offset, Shape shape);

// Spatial resize of [C,H,W]: area averaging for integer down-scaling, bilinear
// (half-pixel centers) otherwise.
template <typename T>
Var<T> resize(Var<T> x, int height, int width);

template <typename T>
Var<T> upsample_nearest(Var<T> x, int factor);

// PyTorch-style adaptive average pooling of [C,H,W] to [C,oh,ow].
template <typename T>
Var<T> adaptive_avg_pool(Var<T> x, int height, int width);

// [C,H,W] -> [C].
template <typename T>
Var<T> global_avg_pool(Var<T> x);

// [C] -> [C,H,W].
template <typename T>
Var<T> broadcast_spatial(Var<T> v, int height, int width);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

// mean |a - b|.
template <typename T>
Var<T> l1_distance(Var<T> a, Var<T> b);

// mean (x - target)^2.
template <typename T>
Var<T> mean_squared_to(Var<T> x, T target);

// Value copy that blocks gradients.
template <typename T>
Var<T> detach(Var<T> x);

}  // namespace fsv2v::nn
