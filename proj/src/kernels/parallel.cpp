#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "fsv2v/kernels/kernels.hpp"

namespace fsv2v::kernels::parallel {

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMajor<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMajor<T>>;

bool is_pointwise(const ConvGeometry& g) { return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1; }

// Unfolds one group of the input into a [cin_g*kh*kw, oh*ow] matrix.
template <typename T>
void im2col(const ConvGeometry& g, int group, const T* input, T* col) {
  const int oh = g.out_height(), ow = g.out_width();
  const int cin_g = g.in_per_group();
  const int rows = cin_g * g.kernel_h * g.kernel_w;
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kernel_w;
    const int ky = (r / g.kernel_w) % g.kernel_h;
    const int ic = group * cin_g + r / (g.kernel_w * g.kernel_h);
    const T* src = input + static_cast<std::size_t>(ic) * g.height * g.width;
    T* dst = col + r * cols;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * g.stride + ky - g.pad_h();
      T* row = dst + static_cast<std::size_t>(oy) * ow;
      if (iy < 0 || iy >= g.height) {
        std::fill(row, row + ow, T(0));
        continue;
      }
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox * g.stride + kx - g.pad_w();
        row[ox] = (ix < 0 || ix >= g.width) ? T(0) : src[iy * g.width + ix];
      }
    }
  }
}

// Folds a column matrix back onto one group of the input gradient. Each input
// channel is owned by one thread.
template <typename T>
void col2im(const ConvGeometry& g, int group, const T* col, T* grad_input) {
  const int oh = g.out_height(), ow = g.out_width();
  const int cin_g = g.in_per_group();
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  const int taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int icg = 0; icg < cin_g; ++icg) {
    T* dst = grad_input + static_cast<std::size_t>(group * cin_g + icg) * g.height * g.width;
    for (int tap = 0; tap < taps; ++tap) {
      const int ky = tap / g.kernel_w, kx = tap % g.kernel_w;
      const T* src = col + (static_cast<std::size_t>(icg) * taps + tap) * cols;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * g.stride + ky - g.pad_h();
        if (iy < 0 || iy >= g.height) continue;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * g.stride + kx - g.pad_w();
          if (ix < 0 || ix >= g.width) continue;
          dst[iy * g.width + ix] += src[static_cast<std::size_t>(oy) * ow + ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  MutMap<T> C(c, m, n);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, m, k) * ConstMap<T>(b, k, n);
  } else if (trans_a && !trans_b) {
    C.noalias() += ConstMap<T>(a, k, m).transpose() * ConstMap<T>(b, k, n);
  } else if (!trans_a && trans_b) {
    C.noalias() += ConstMap<T>(a, m, k) * ConstMap<T>(b, n, k).transpose();
  } else {
    C.noalias() += ConstMap<T>(a, k, m).transpose() * ConstMap<T>(b, n, k).transpose();
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* kernel, const T* bias, T* output) {
  const int cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const int k = cin_g * g.kernel_h * g.kernel_w;
  const int p = g.out_height() * g.out_width();
  std::vector<T> col;
  if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(k) * p);
  for (int grp = 0; grp < g.groups; ++grp) {
    const T* cols = input + static_cast<std::size_t>(grp) * cin_g * g.height * g.width;
    if (!is_pointwise(g)) {
      im2col(g, grp, input, col.data());
      cols = col.data();
    }
    gemm(false, false, cout_g, p, k, kernel + static_cast<std::size_t>(grp) * cout_g * k, cols,
         output + static_cast<std::size_t>(grp) * cout_g * p, false);
  }
  if (bias) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < g.out_channels; ++oc) {
      T* row = output + static_cast<std::size_t>(oc) * p;
      for (int i = 0; i < p; ++i) row[i] += bias[oc];
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* kernel, const T* grad_output,
                     T* grad_input, T* grad_kernel, T* grad_bias) {
  const int cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const int k = cin_g * g.kernel_h * g.kernel_w;
  const int p = g.out_height() * g.out_width();
  if (grad_bias) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < g.out_channels; ++oc) {
      const T* row = grad_output + static_cast<std::size_t>(oc) * p;
      T s = 0;
      for (int i = 0; i < p; ++i) s += row[i];
      grad_bias[oc] += s;
    }
  }
  if (!grad_input && !grad_kernel) return;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col, grad_col;
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(k) * p);
    if (grad_input) grad_col.resize(col.size());
  }
  for (int grp = 0; grp < g.groups; ++grp) {
    const T* go = grad_output + static_cast<std::size_t>(grp) * cout_g * p;
    const T* w = kernel + static_cast<std::size_t>(grp) * cout_g * k;
    if (grad_kernel) {
      const T* cols = input + static_cast<std::size_t>(grp) * cin_g * g.height * g.width;
      if (!pointwise) {
        im2col(g, grp, input, col.data());
        cols = col.data();
      }
      gemm(false, true, cout_g, k, p, go, cols, grad_kernel + static_cast<std::size_t>(grp) * cout_g * k, true);
    }
    if (grad_input) {
      if (pointwise) {
        gemm(true, false, k, p, cout_g, w, go, grad_input + static_cast<std::size_t>(grp) * cin_g * p, true);
      } else {
        gemm(true, false, k, p, cout_g, w, go, grad_col.data(), false);
        col2im(g, grp, grad_col.data(), grad_input);
      }
    }
  }
}

namespace {

template <typename T>
struct Tap {
  int x0, x1, y0, y1;
  T wx, wy;
  bool clamped_x, clamped_y;
};

template <typename T>
inline Tap<T> sample_tap(int height, int width, int y, int x, T fx, T fy) {
  Tap<T> t{};
  T sx = static_cast<T>(x) + fx;
  T sy = static_cast<T>(y) + fy;
  t.clamped_x = sx < T(0) || sx > static_cast<T>(width - 1);
  t.clamped_y = sy < T(0) || sy > static_cast<T>(height - 1);
  sx = std::clamp(sx, T(0), static_cast<T>(width - 1));
  sy = std::clamp(sy, T(0), static_cast<T>(height - 1));
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.wx = sx - static_cast<T>(t.x0);
  t.wy = sy - static_cast<T>(t.y0);
  return t;
}

}  // namespace

template <typename T>
void warp_forward(int channels, int height, int width, const T* image, const T* flow, T* output) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const auto t = sample_tap(height, width, y, x, flow[p], flow[plane + p]);
      const std::size_t i00 = t.y0 * width + t.x0, i01 = t.y0 * width + t.x1;
      const std::size_t i10 = t.y1 * width + t.x0, i11 = t.y1 * width + t.x1;
      for (int c = 0; c < channels; ++c) {
        const T* im = image + c * plane;
        // Same association as the serial reference so integer shifts are exact.
        const T top = im[i00] * (T(1) - t.wx) + im[i01] * t.wx;
        const T bot = im[i10] * (T(1) - t.wx) + im[i11] * t.wx;
        output[c * plane + p] = top * (T(1) - t.wy) + bot * t.wy;
      }
    }
  }
}

template <typename T>
void warp_backward(int channels, int height, int width, const T* image, const T* flow,
                   const T* grad_output, T* grad_image, T* grad_flow) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (grad_image) {
    // Scatter is channel-private, so channels are the parallel axis.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      T* gi = grad_image + c * plane;
      const T* go = grad_output + c * plane;
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * width + x;
          const auto t = sample_tap(height, width, y, x, flow[p], flow[plane + p]);
          const T g = go[p];
          gi[t.y0 * width + t.x0] += g * (T(1) - t.wx) * (T(1) - t.wy);
          gi[t.y0 * width + t.x1] += g * t.wx * (T(1) - t.wy);
          gi[t.y1 * width + t.x0] += g * (T(1) - t.wx) * t.wy;
          gi[t.y1 * width + t.x1] += g * t.wx * t.wy;
        }
      }
    }
  }
  if (grad_flow) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        const auto t = sample_tap(height, width, y, x, flow[p], flow[plane + p]);
        T dfx = 0, dfy = 0;
        for (int c = 0; c < channels; ++c) {
          const T* im = image + c * plane;
          const T g = grad_output[c * plane + p];
          const T v00 = im[t.y0 * width + t.x0], v01 = im[t.y0 * width + t.x1];
          const T v10 = im[t.y1 * width + t.x0], v11 = im[t.y1 * width + t.x1];
          dfx += g * ((v01 - v00) * (T(1) - t.wy) + (v11 - v10) * t.wy);
          dfy += g * ((v10 - v00) * (T(1) - t.wx) + (v11 - v01) * t.wx);
        }
        if (!t.clamped_x) grad_flow[p] += dfx;
        if (!t.clamped_y) grad_flow[plane + p] += dfy;
      }
    }
  }
}

namespace {

int norm_groups(const NormGeometry& g) {
  return g.mode == NormMode::instance ? g.samples * g.channels : g.channels;
}

// Offset of the n-th plane belonging to normalization group `group`.
std::size_t plane_offset(const NormGeometry& g, int group, int n) {
  if (g.mode == NormMode::instance) return static_cast<std::size_t>(group) * g.plane;
  return (static_cast<std::size_t>(n) * g.channels + group) * g.plane;
}

int planes_per_group(const NormGeometry& g) { return g.mode == NormMode::instance ? 1 : g.samples; }

}  // namespace

template <typename T>
void normalize_forward(const NormGeometry& g, T eps, const T* input, T* output, T* inv_std) {
  const int groups = norm_groups(g);
  const int planes = planes_per_group(g);
#pragma omp parallel for schedule(static)
  for (int grp = 0; grp < groups; ++grp) {
    const T count = static_cast<T>(planes) * static_cast<T>(g.plane);
    T mean = 0;
    for (int n = 0; n < planes; ++n) {
      const T* x = input + plane_offset(g, grp, n);
      for (int i = 0; i < g.plane; ++i) mean += x[i];
    }
    mean /= count;
    T var = 0;
    for (int n = 0; n < planes; ++n) {
      const T* x = input + plane_offset(g, grp, n);
      for (int i = 0; i < g.plane; ++i) var += (x[i] - mean) * (x[i] - mean);
    }
    var /= count;
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[grp] = is;
    for (int n = 0; n < planes; ++n) {
      const T* x = input + plane_offset(g, grp, n);
      T* y = output + plane_offset(g, grp, n);
      for (int i = 0; i < g.plane; ++i) y[i] = (x[i] - mean) * is;
    }
  }
}

template <typename T>
void normalize_backward(const NormGeometry& g, const T* output, const T* inv_std, const T* grad_output,
                        T* grad_input) {
  const int groups = norm_groups(g);
  const int planes = planes_per_group(g);
#pragma omp parallel for schedule(static)
  for (int grp = 0; grp < groups; ++grp) {
    const T count = static_cast<T>(planes) * static_cast<T>(g.plane);
    T mean_go = 0, mean_go_y = 0;
    for (int n = 0; n < planes; ++n) {
      const std::size_t off = plane_offset(g, grp, n);
      for (int i = 0; i < g.plane; ++i) {
        mean_go += grad_output[off + i];
        mean_go_y += grad_output[off + i] * output[off + i];
      }
    }
    mean_go /= count;
    mean_go_y /= count;
    for (int n = 0; n < planes; ++n) {
      const std::size_t off = plane_offset(g, grp, n);
      for (int i = 0; i < g.plane; ++i)
        grad_input[off + i] += inv_std[grp] * (grad_output[off + i] - mean_go - output[off + i] * mean_go_y);
    }
  }
}

#define FSV2V_INSTANTIATE(T)                                                                          \
  template void gemm<T>(bool, bool, int, int, int, const T*, const T*, T*, bool);                    \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);            \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);   \
  template void warp_forward<T>(int, int, int, const T*, const T*, T*);                              \
  template void warp_backward<T>(int, int, int, const T*, const T*, const T*, T*, T*);               \
  template void normalize_forward<T>(const NormGeometry&, T, const T*, T*, T*);                      \
  template void normalize_backward<T>(const NormGeometry&, const T*, const T*, const T*, T*);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)
#undef FSV2V_INSTANTIATE

}  // namespace fsv2v::kernels::parallel
