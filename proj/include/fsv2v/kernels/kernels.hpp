#pragma once

// Raw-buffer compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial::` is the straightforward loop nest kept
// as the reference, `parallel::` is the OpenMP/GEMM version used by the graph.
// Both write outputs with `=` and accumulate gradients with `+=`; gradient
// pointers may be null to skip that gradient.

#include <cstddef>

namespace fsv2v::kernels {

struct ConvGeometry {
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int groups = 1;

  int pad_h() const { return (kernel_h - 1) / 2; }
  int pad_w() const { return (kernel_w - 1) / 2; }
  int out_height() const { return (height + 2 * pad_h() - kernel_h) / stride + 1; }
  int out_width() const { return (width + 2 * pad_w() - kernel_w) / stride + 1; }
  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }
  std::size_t kernel_size() const {
    return static_cast<std::size_t>(out_channels) * in_per_group() * kernel_h * kernel_w;
  }
};

enum class NormMode { batch, instance };

// Layout for normalize kernels: `samples` x `channels` planes of `plane` values.
struct NormGeometry {
  int samples = 1;
  int channels = 1;
  int plane = 1;
  NormMode mode = NormMode::instance;
};

namespace serial {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* kernel, const T* bias, T* output);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* kernel, const T* grad_output,
                     T* grad_input, T* grad_kernel, T* grad_bias);

template <typename T>
void warp_forward(int channels, int height, int width, const T* image, const T* flow, T* output);
template <typename T>
void warp_backward(int channels, int height, int width, const T* image, const T* flow,
                   const T* grad_output, T* grad_image, T* grad_flow);

// `inv_std` receives one value per normalization group (channel for batch
// mode, sample*channel for instance mode).
template <typename T>
void normalize_forward(const NormGeometry& g, T eps, const T* input, T* output, T* inv_std);
template <typename T>
void normalize_backward(const NormGeometry& g, const T* output, const T* inv_std, const T* grad_output,
                        T* grad_input);

}  // namespace serial

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* kernel, const T* bias, T* output);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* kernel, const T* grad_output,
                     T* grad_input, T* grad_kernel, T* grad_bias);

template <typename T>
void warp_forward(int channels, int height, int width, const T* image, const T* flow, T* output);
template <typename T>
void warp_backward(int channels, int height, int width, const T* image, const T* flow,
                   const T* grad_output, T* grad_image, T* grad_flow);

template <typename T>
void normalize_forward(const NormGeometry& g, T eps, const T* input, T* output, T* inv_std);
template <typename T>
void normalize_backward(const NormGeometry& g, const T* output, const T* inv_std, const T* grad_output,
                        T* grad_input);

// Row-major C[m,n] (+)= op(A) * op(B).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace parallel

}  // namespace fsv2v::kernels
