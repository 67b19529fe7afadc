#include <algorithm>
#include <cmath>
#include <vector>

#include "fsv2v/kernels/kernels.hpp"

namespace fsv2v::kernels::serial {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* kernel, const T* bias, T* output) {
  const int oh = g.out_height(), ow = g.out_width();
  const int cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (int oc = 0; oc < g.out_channels; ++oc) {
    const int grp = oc / cout_g;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T acc = bias ? bias[oc] : T(0);
        for (int icg = 0; icg < cin_g; ++icg) {
          const int ic = grp * cin_g + icg;
          for (int ky = 0; ky < g.kernel_h; ++ky) {
            const int iy = oy * g.stride + ky - g.pad_h();
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              const int ix = ox * g.stride + kx - g.pad_w();
              if (ix < 0 || ix >= g.width) continue;
              acc += kernel[((oc * cin_g + icg) * g.kernel_h + ky) * g.kernel_w + kx] *
                     input[(ic * g.height + iy) * g.width + ix];
            }
          }
        }
        output[(oc * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* kernel, const T* grad_output,
                     T* grad_input, T* grad_kernel, T* grad_bias) {
  const int oh = g.out_height(), ow = g.out_width();
  const int cin_g = g.in_per_group(), cout_g = g.out_per_group();
  for (int oc = 0; oc < g.out_channels; ++oc) {
    const int grp = oc / cout_g;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const T go = grad_output[(oc * oh + oy) * ow + ox];
        if (grad_bias) grad_bias[oc] += go;
        for (int icg = 0; icg < cin_g; ++icg) {
          const int ic = grp * cin_g + icg;
          for (int ky = 0; ky < g.kernel_h; ++ky) {
            const int iy = oy * g.stride + ky - g.pad_h();
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              const int ix = ox * g.stride + kx - g.pad_w();
              if (ix < 0 || ix >= g.width) continue;
              const std::size_t k = ((oc * cin_g + icg) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t i = (ic * g.height + iy) * g.width + ix;
              if (grad_kernel) grad_kernel[k] += go * input[i];
              if (grad_input) grad_input[i] += go * kernel[k];
            }
          }
        }
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
Tap<T> sample_tap(int height, int width, int y, int x, T fx, T fy) {
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
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const auto t = sample_tap(height, width, y, x, flow[p], flow[plane + p]);
      for (int c = 0; c < channels; ++c) {
        const T* im = image + c * plane;
        const T top = im[t.y0 * width + t.x0] * (T(1) - t.wx) + im[t.y0 * width + t.x1] * t.wx;
        const T bot = im[t.y1 * width + t.x0] * (T(1) - t.wx) + im[t.y1 * width + t.x1] * t.wx;
        output[c * plane + p] = top * (T(1) - t.wy) + bot * t.wy;
      }
    }
  }
}

template <typename T>
void warp_backward(int channels, int height, int width, const T* image, const T* flow,
                   const T* grad_output, T* grad_image, T* grad_flow) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const auto t = sample_tap(height, width, y, x, flow[p], flow[plane + p]);
      T dfx = 0, dfy = 0;
      for (int c = 0; c < channels; ++c) {
        const T* im = image + c * plane;
        const T go = grad_output[c * plane + p];
        const T v00 = im[t.y0 * width + t.x0], v01 = im[t.y0 * width + t.x1];
        const T v10 = im[t.y1 * width + t.x0], v11 = im[t.y1 * width + t.x1];
        if (grad_image) {
          T* gi = grad_image + c * plane;
          gi[t.y0 * width + t.x0] += go * (T(1) - t.wx) * (T(1) - t.wy);
          gi[t.y0 * width + t.x1] += go * t.wx * (T(1) - t.wy);
          gi[t.y1 * width + t.x0] += go * (T(1) - t.wx) * t.wy;
          gi[t.y1 * width + t.x1] += go * t.wx * t.wy;
        }
        dfx += go * ((v01 - v00) * (T(1) - t.wy) + (v11 - v10) * t.wy);
        dfy += go * ((v10 - v00) * (T(1) - t.wx) + (v11 - v01) * t.wx);
      }
      if (grad_flow) {
        if (!t.clamped_x) grad_flow[p] += dfx;
        if (!t.clamped_y) grad_flow[plane + p] += dfy;
      }
    }
  }
}

namespace {

// Visits each normalization group as a list of contiguous planes.
template <typename F>
void for_each_norm_group(const NormGeometry& g, F&& f) {
  const std::size_t plane = static_cast<std::size_t>(g.plane);
  if (g.mode == NormMode::instance) {
    for (int n = 0; n < g.samples; ++n) {
      for (int c = 0; c < g.channels; ++c) {
        const std::size_t offset = (static_cast<std::size_t>(n) * g.channels + c) * plane;
        f(static_cast<std::size_t>(n) * g.channels + c, std::vector<std::size_t>{offset});
      }
    }
  } else {
    for (int c = 0; c < g.channels; ++c) {
      std::vector<std::size_t> offsets;
      for (int n = 0; n < g.samples; ++n) offsets.push_back((static_cast<std::size_t>(n) * g.channels + c) * plane);
      f(static_cast<std::size_t>(c), offsets);
    }
  }
}

}  // namespace

template <typename T>
void normalize_forward(const NormGeometry& g, T eps, const T* input, T* output, T* inv_std) {
  for_each_norm_group(g, [&](std::size_t group, const std::vector<std::size_t>& offsets) {
    const T count = static_cast<T>(offsets.size() * static_cast<std::size_t>(g.plane));
    T mean = 0;
    for (auto off : offsets)
      for (int i = 0; i < g.plane; ++i) mean += input[off + i];
    mean /= count;
    T var = 0;
    for (auto off : offsets)
      for (int i = 0; i < g.plane; ++i) var += (input[off + i] - mean) * (input[off + i] - mean);
    var /= count;
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[group] = is;
    for (auto off : offsets)
      for (int i = 0; i < g.plane; ++i) output[off + i] = (input[off + i] - mean) * is;
  });
}

template <typename T>
void normalize_backward(const NormGeometry& g, const T* output, const T* inv_std, const T* grad_output,
                        T* grad_input) {
  for_each_norm_group(g, [&](std::size_t group, const std::vector<std::size_t>& offsets) {
    const T count = static_cast<T>(offsets.size() * static_cast<std::size_t>(g.plane));
    T mean_go = 0, mean_go_y = 0;
    for (auto off : offsets) {
      for (int i = 0; i < g.plane; ++i) {
        mean_go += grad_output[off + i];
        mean_go_y += grad_output[off + i] * output[off + i];
      }
    }
    mean_go /= count;
    mean_go_y /= count;
    for (auto off : offsets)
      for (int i = 0; i < g.plane; ++i)
        grad_input[off + i] += inv_std[group] * (grad_output[off + i] - mean_go - output[off + i] * mean_go_y);
  });
}

#define FSV2V_INSTANTIATE(T)                                                                          \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);            \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);   \
  template void warp_forward<T>(int, int, int, const T*, const T*, T*);                              \
  template void warp_backward<T>(int, int, int, const T*, const T*, const T*, T*, T*);               \
  template void normalize_forward<T>(const NormGeometry&, T, const T*, T*, T*);                      \
  template void normalize_backward<T>(const NormGeometry&, const T*, const T*, const T*, T*);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)
#undef FSV2V_INSTANTIATE

}  // namespace fsv2v::kernels::serial
