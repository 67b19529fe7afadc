#include "fsv2v/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fsv2v::nn {

namespace {

void require(bool cond, const std::string& op, const Shape& a, const Shape& b) {
  if (!cond) throw DimensionError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

void require_rank(const Shape& s, int rank, const std::string& op) {
  if (static_cast<int>(s.size()) != rank) {
    throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

template <typename T, typename F>
Var<T> unary(Var<T> x, F&& fwd_and_deriv) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  Tensor<T> deriv(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    auto [y, d] = fwd_and_deriv(xv[i]);
    out[i] = y;
    deriv[i] = d;
  }
  const int xi = x.id;
  return x.graph->record(std::move(out), {x}, [xi, deriv = std::move(deriv)](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * deriv[i];
  });
}

struct AxisTap {
  int i0, i1;
  double w;
};

// Half-pixel bilinear taps along one axis.
std::vector<AxisTap> bilinear_taps(int in, int out) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, std::optional<Var<T>> bias, int stride, int groups) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  require_rank(is, 3, "conv2d input");
  require_rank(ks, 4, "conv2d kernel");
  if (groups < 1 || stride < 1) throw DimensionError("conv2d: stride and groups must be positive");
  require(is[0] % groups == 0 && ks[0] % groups == 0 && ks[1] * groups == is[0], "conv2d", is, ks);
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0) throw DimensionError("conv2d: kernel sizes must be odd, got " + to_string(ks));
  if (bias) require(bias->shape() == Shape{ks[0]}, "conv2d bias", bias->shape(), ks);

  kernels::ConvGeometry geo;
  geo.in_channels = is[0];
  geo.height = is[1];
  geo.width = is[2];
  geo.out_channels = ks[0];
  geo.kernel_h = ks[2];
  geo.kernel_w = ks[3];
  geo.stride = stride;
  geo.groups = groups;

  Tensor<T> out({geo.out_channels, geo.out_height(), geo.out_width()});
  kernels::parallel::conv2d_forward(geo, input.value().data(), kernel.value().data(),
                                    bias ? bias->value().data() : nullptr, out.data());

  const int xi = input.id, ki = kernel.id, bi = bias ? bias->id : -1;
  std::vector<Var<T>> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return input.graph->record(std::move(out), inputs, [geo, xi, ki, bi](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    T* gx = g.requires_grad(xi) ? g.grad(xi).data() : nullptr;
    T* gk = g.requires_grad(ki) ? g.grad(ki).data() : nullptr;
    T* gb = (bi >= 0 && g.requires_grad(bi)) ? g.grad(bi).data() : nullptr;
    kernels::parallel::conv2d_backward(geo, g.value(xi).data(), g.value(ki).data(), go.data(), gx, gk, gb);
  });
}

template <typename T>
Var<T> fully_connected(Var<T> input, Var<T> weight, Var<T> bias) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_rank(xs, 1, "fully_connected input");
  require_rank(ws, 2, "fully_connected weight");
  require(ws[1] == xs[0], "fully_connected", ws, xs);
  require(bias.shape() == Shape{ws[0]}, "fully_connected bias", bias.shape(), ws);
  const int m = ws[0], n = ws[1];
  Tensor<T> out({m});
  std::copy(bias.value().data(), bias.value().data() + m, out.data());
  kernels::parallel::gemm(false, false, m, 1, n, weight.value().data(), input.value().data(), out.data(), true);
  const int xi = input.id, wi = weight.id, bi = bias.id;
  return input.graph->record(std::move(out), {input, weight, bias}, [m, n, xi, wi, bi](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    if (g.requires_grad(bi)) {
      Tensor<T>& gb = g.grad(bi);
      for (int i = 0; i < m; ++i) gb[i] += go[i];
    }
    if (g.requires_grad(wi)) {
      kernels::parallel::gemm(false, false, m, n, 1, go.data(), g.value(xi).data(), g.grad(wi).data(), true);
    }
    if (g.requires_grad(xi)) {
      kernels::parallel::gemm(true, false, n, 1, m, g.value(wi).data(), go.data(), g.grad(xi).data(), true);
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a, bool trans_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require_rank(as, 2, "matmul lhs");
  require_rank(bs, 2, "matmul rhs");
  const int m = trans_a ? as[1] : as[0];
  const int k = trans_a ? as[0] : as[1];
  const int kb = trans_b ? bs[1] : bs[0];
  const int n = trans_b ? bs[0] : bs[1];
  require(k == kb, "matmul", as, bs);
  Tensor<T> out({m, n});
  kernels::parallel::gemm(trans_a, trans_b, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  const int ai = a.id, bi = b.id;
  return a.graph->record(std::move(out), {a, b}, [=](Graph<T>& g, int self) {
    const T* dc = g.grad(self).data();
    const T* av = g.value(ai).data();
    const T* bv = g.value(bi).data();
    using kernels::parallel::gemm;
    if (g.requires_grad(ai)) {
      T* da = g.grad(ai).data();
      if (!trans_a && !trans_b) gemm(false, true, m, k, n, dc, bv, da, true);
      else if (trans_a && !trans_b) gemm(false, true, k, m, n, bv, dc, da, true);
      else if (!trans_a && trans_b) gemm(false, false, m, k, n, dc, bv, da, true);
      else gemm(true, true, k, m, n, bv, dc, da, true);
    }
    if (g.requires_grad(bi)) {
      T* db = g.grad(bi).data();
      if (!trans_a && !trans_b) gemm(true, false, k, n, m, av, dc, db, true);
      else if (trans_a && !trans_b) gemm(false, false, k, n, m, av, dc, db, true);
      else if (!trans_a && trans_b) gemm(true, false, n, k, m, dc, av, db, true);
      else gemm(true, true, n, k, m, dc, av, db, true);
    }
  });
}

template <typename T>
Var<T> bilinear_warp(Var<T> image, Var<T> flow) {
  const Shape& is = image.shape();
  const Shape& fs = flow.shape();
  require_rank(is, 3, "bilinear_warp image");
  require(fs.size() == 3 && fs[0] == 2 && fs[1] == is[1] && fs[2] == is[2], "bilinear_warp", is, fs);
  const int c = is[0], h = is[1], w = is[2];
  Tensor<T> out(is);
  kernels::parallel::warp_forward(c, h, w, image.value().data(), flow.value().data(), out.data());
  const int ii = image.id, fi = flow.id;
  return image.graph->record(std::move(out), {image, flow}, [=](Graph<T>& g, int self) {
    T* gi = g.requires_grad(ii) ? g.grad(ii).data() : nullptr;
    T* gf = g.requires_grad(fi) ? g.grad(fi).data() : nullptr;
    kernels::parallel::warp_backward(c, h, w, g.value(ii).data(), g.value(fi).data(), g.grad(self).data(), gi, gf);
  });
}

template <typename T>
Var<T> softmax(Var<T> logits, int axis) {
  const Shape& s = logits.shape();
  if (s.empty() || s.size() > 2) throw DimensionError("softmax: expected rank 1 or 2, got " + to_string(s));
  const int rows = s.size() == 2 ? s[0] : 1;
  const int cols = s.size() == 2 ? s[1] : s[0];
  const bool along_rows = s.size() == 2 && axis == 0;  // normalize each column
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw DimensionError("softmax: bad axis for " + to_string(s));
  const int groups = along_rows ? cols : rows;
  const int len = along_rows ? rows : cols;
  auto index = [=](int grp, int i) {
    return along_rows ? static_cast<std::size_t>(i) * cols + grp : static_cast<std::size_t>(grp) * cols + i;
  };
  const Tensor<T>& x = logits.value();
  Tensor<T> out(s);
#pragma omp parallel for schedule(static)
  for (int grp = 0; grp < groups; ++grp) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < len; ++i) mx = std::max(mx, x[index(grp, i)]);
    T total = 0;
    for (int i = 0; i < len; ++i) {
      const T e = std::exp(x[index(grp, i)] - mx);
      out[index(grp, i)] = e;
      total += e;
    }
    for (int i = 0; i < len; ++i) out[index(grp, i)] /= total;
  }
  const int xi = logits.id;
  return logits.graph->record(std::move(out), {logits}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (int grp = 0; grp < groups; ++grp) {
      T dot = 0;
      for (int i = 0; i < len; ++i) dot += go[index(grp, i)] * y[index(grp, i)];
      for (int i = 0; i < len; ++i) gx[index(grp, i)] += y[index(grp, i)] * (go[index(grp, i)] - dot);
    }
  });
}

template <typename T>
Var<T> normalize_features(Var<T> input, NormMode mode, T eps) {
  const Shape& s = input.shape();
  if (s.size() != 3 && s.size() != 4) throw DimensionError("normalize_features: expected [C,H,W] or [N,C,H,W], got " + to_string(s));
  if (!(eps > T(0))) throw ContractError("normalize_features: eps must be positive");
  kernels::NormGeometry geo;
  geo.samples = s.size() == 4 ? s[0] : 1;
  geo.channels = s.size() == 4 ? s[1] : s[0];
  geo.plane = s[s.size() - 1] * s[s.size() - 2];
  geo.mode = mode;
  Tensor<T> out(s);
  std::vector<T> inv_std(static_cast<std::size_t>(mode == NormMode::instance ? geo.samples * geo.channels : geo.channels));
  kernels::parallel::normalize_forward(geo, eps, input.value().data(), out.data(), inv_std.data());
  const int xi = input.id;
  return input.graph->record(std::move(out), {input}, [geo, xi, inv_std = std::move(inv_std)](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    kernels::parallel::normalize_backward(geo, g.value(self).data(), inv_std.data(), g.grad(self).data(),
                                          g.grad(xi).data());
  });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  return unary(x, [slope](T v) { return v > T(0) ? std::pair{v, T(1)} : std::pair{v * slope, slope}; });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(x, [](T v) {
    const T y = std::tanh(v);
    return std::pair{y, T(1) - y * y};
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(x, [](T v) {
    const T y = T(1) / (T(1) + std::exp(-v));
    return std::pair{y, y * (T(1) - y)};
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const int ai = a.id, bi = b.id;
  return a.graph->record(std::move(out), {a, b}, [ai, bi](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    for (int id : {ai, bi}) {
      if (!g.requires_grad(id)) continue;
      Tensor<T>& gx = g.grad(id);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const int ai = a.id, bi = b.id;
  return a.graph->record(std::move(out), {a, b}, [ai, bi](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    if (g.requires_grad(ai)) {
      Tensor<T>& gx = g.grad(ai);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (g.requires_grad(bi)) {
      Tensor<T>& gx = g.grad(bi);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] -= go[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const int ai = a.id, bi = b.id;
  return a.graph->record(std::move(out), {a, b}, [ai, bi](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    if (g.requires_grad(ai)) {
      Tensor<T>& gx = g.grad(ai);
      const Tensor<T>& bv = g.value(bi);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      Tensor<T>& gx = g.grad(bi);
      const Tensor<T>& av = g.value(ai);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * av[i];
    }
  });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  return unary(x, [c](T v) { return std::pair{v + c, T(1)}; });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  return unary(x, [c](T v) { return std::pair{v * c, c}; });
}

template <typename T>
Var<T> affine_channels(Var<T> x, Var<T> scale_v, Var<T> bias) {
  const Shape& s = x.shape();
  require_rank(s, 3, "affine_channels");
  require(scale_v.shape() == Shape{s[0]} && bias.shape() == Shape{s[0]}, "affine_channels", s, scale_v.shape());
  const int c = s[0];
  const std::size_t plane = static_cast<std::size_t>(s[1]) * s[2];
  Tensor<T> out(s);
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] = scale_v.value()[ch] * x.value()[ch * plane + i] + bias.value()[ch];
  const int xi = x.id, si = scale_v.id, bi = bias.id;
  return x.graph->record(std::move(out), {x, scale_v, bias}, [=](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& xv = g.value(xi);
    const Tensor<T>& sv = g.value(si);
    for (int ch = 0; ch < c; ++ch) {
      T dscale = 0, dbias = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        dscale += go[ch * plane + i] * xv[ch * plane + i];
        dbias += go[ch * plane + i];
      }
      if (g.requires_grad(si)) g.grad(si)[ch] += dscale;
      if (g.requires_grad(bi)) g.grad(bi)[ch] += dbias;
      if (g.requires_grad(xi)) {
        Tensor<T>& gx = g.grad(xi);
        for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += go[ch * plane + i] * sv[ch];
      }
    }
  });
}

template <typename T>
Var<T> matte(Var<T> base, Var<T> over, Var<T> mask) {
  const Shape& s = base.shape();
  require_rank(s, 3, "matte");
  require(over.shape() == s, "matte", s, over.shape());
  require(mask.shape() == Shape{1, s[1], s[2]}, "matte mask", s, mask.shape());
  const int c = s[0];
  const std::size_t plane = static_cast<std::size_t>(s[1]) * s[2];
  Tensor<T> out(s);
  const Tensor<T>& bv = base.value();
  const Tensor<T>& ov = over.value();
  const Tensor<T>& mv = mask.value();
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] = (T(1) - mv[i]) * bv[ch * plane + i] + mv[i] * ov[ch * plane + i];
  const int bi = base.id, oi = over.id, mi = mask.id;
  return base.graph->record(std::move(out), {base, over, mask}, [=](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& m = g.value(mi);
    if (g.requires_grad(bi)) {
      Tensor<T>& gb = g.grad(bi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gb[ch * plane + i] += go[ch * plane + i] * (T(1) - m[i]);
    }
    if (g.requires_grad(oi)) {
      Tensor<T>& gover = g.grad(oi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gover[ch * plane + i] += go[ch * plane + i] * m[i];
    }
    if (g.requires_grad(mi)) {
      Tensor<T>& gm = g.grad(mi);
      const Tensor<T>& b = g.value(bi);
      const Tensor<T>& o = g.value(oi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gm[i] += go[ch * plane + i] * (o[ch * plane + i] - b[ch * plane + i]);
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape s = parts.front().shape();
  int lead = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    require(ps.size() == s.size() && std::equal(ps.begin() + 1, ps.end(), s.begin() + 1), "concat", s, ps);
    lead += ps[0];
  }
  s[0] = lead;
  Tensor<T> out(s);
  std::vector<std::pair<int, std::size_t>> spans;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    spans.emplace_back(p.id, offset);
    offset += v.size();
  }
  return parts.front().graph->record(std::move(out), parts, [spans](Graph<T>& g, int self) {
    const Tensor<T>& go = g.grad(self);
    for (const auto& [id, off] : spans) {
      if (!g.requires_grad(id)) continue;
      Tensor<T>& gx = g.grad(id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[off + i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const int xi = x.id;
  return x.graph->record(std::move(out), {x}, [xi](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t offset, Shape shape) {
  const std::size_t n = element_count(shape);
  if (offset + n > x.size()) {
    throw DimensionError("slice: range [" + std::to_string(offset) + "," + std::to_string(offset + n) +
                         ") exceeds " + to_string(x.shape()));
  }
  std::vector<T> data(x.value().data() + offset, x.value().data() + offset + n);
  const int xi = x.id;
  return x.graph->record(Tensor<T>(std::move(shape), std::move(data)), {x}, [xi, offset](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[offset + i] += go[i];
  });
}

template <typename T>
Var<T> resize(Var<T> x, int height, int width) {
  const Shape& s = x.shape();
  require_rank(s, 3, "resize");
  if (height <= 0 || width <= 0) throw DimensionError("resize: target size must be positive");
  const int c = s[0], h = s[1], w = s[2];
  if (h == height && w == width) return x;
  const int xi = x.id;
  Tensor<T> out({c, height, width});
  const Tensor<T>& xv = x.value();
  if (h % height == 0 && w % width == 0) {
    const int fy = h / height, fx = w / width;
    const T norm = T(1) / static_cast<T>(fy * fx);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx) {
          T acc = 0;
          for (int dy = 0; dy < fy; ++dy)
            for (int dx = 0; dx < fx; ++dx) acc += xv.at(ch, y * fy + dy, xx * fx + dx);
          out.at(ch, y, xx) = acc * norm;
        }
    return x.graph->record(std::move(out), {x}, [=](Graph<T>& g, int self) {
      if (!g.requires_grad(xi)) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& gx = g.grad(xi);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < height; ++y)
          for (int xx = 0; xx < width; ++xx) {
            const T v = go.at(ch, y, xx) * norm;
            for (int dy = 0; dy < fy; ++dy)
              for (int dx = 0; dx < fx; ++dx) gx.at(ch, y * fy + dy, xx * fx + dx) += v;
          }
    });
  }
  const auto ty = bilinear_taps(h, height);
  const auto tx = bilinear_taps(w, width);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < height; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      const T wy = static_cast<T>(a.w);
      for (int xx = 0; xx < width; ++xx) {
        const auto& b = tx[static_cast<std::size_t>(xx)];
        const T wx = static_cast<T>(b.w);
        const T top = xv.at(ch, a.i0, b.i0) * (T(1) - wx) + xv.at(ch, a.i0, b.i1) * wx;
        const T bot = xv.at(ch, a.i1, b.i0) * (T(1) - wx) + xv.at(ch, a.i1, b.i1) * wx;
        out.at(ch, y, xx) = top * (T(1) - wy) + bot * wy;
      }
    }
  return x.graph->record(std::move(out), {x}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < height; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        const T wy = static_cast<T>(a.w);
        for (int xx = 0; xx < width; ++xx) {
          const auto& b = tx[static_cast<std::size_t>(xx)];
          const T wx = static_cast<T>(b.w);
          const T v = go.at(ch, y, xx);
          gx.at(ch, a.i0, b.i0) += v * (T(1) - wy) * (T(1) - wx);
          gx.at(ch, a.i0, b.i1) += v * (T(1) - wy) * wx;
          gx.at(ch, a.i1, b.i0) += v * wy * (T(1) - wx);
          gx.at(ch, a.i1, b.i1) += v * wy * wx;
        }
      }
  });
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, int factor) {
  const Shape& s = x.shape();
  require_rank(s, 3, "upsample_nearest");
  if (factor < 1) throw DimensionError("upsample_nearest: factor must be >= 1");
  const int c = s[0], h = s[1], w = s[2];
  Tensor<T> out({c, h * factor, w * factor});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h * factor; ++y)
      for (int xx = 0; xx < w * factor; ++xx) out.at(ch, y, xx) = x.value().at(ch, y / factor, xx / factor);
  const int xi = x.id;
  return x.graph->record(std::move(out), {x}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h * factor; ++y)
        for (int xx = 0; xx < w * factor; ++xx) gx.at(ch, y / factor, xx / factor) += go.at(ch, y, xx);
  });
}

template <typename T>
Var<T> adaptive_avg_pool(Var<T> x, int height, int width) {
  const Shape& s = x.shape();
  require_rank(s, 3, "adaptive_avg_pool");
  const int c = s[0], h = s[1], w = s[2];
  auto bounds = [](int i, int in, int out) {
    return std::pair{(i * in) / out, ((i + 1) * in + out - 1) / out};
  };
  Tensor<T> out({c, height, width});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < height; ++y) {
      const auto [y0, y1] = bounds(y, h, height);
      for (int xx = 0; xx < width; ++xx) {
        const auto [x0, x1] = bounds(xx, w, width);
        T acc = 0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) acc += x.value().at(ch, iy, ix);
        out.at(ch, y, xx) = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  const int xi = x.id;
  return x.graph->record(std::move(out), {x}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(xi);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < height; ++y) {
        const auto [y0, y1] = bounds(y, h, height);
        for (int xx = 0; xx < width; ++xx) {
          const auto [x0, x1] = bounds(xx, w, width);
          const T v = go.at(ch, y, xx) / static_cast<T>((y1 - y0) * (x1 - x0));
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix) gx.at(ch, iy, ix) += v;
        }
      }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& s = x.shape();
  require_rank(s, 3, "global_avg_pool");
  return reshape(adaptive_avg_pool(x, 1, 1), Shape{s[0]});
}

template <typename T>
Var<T> broadcast_spatial(Var<T> v, int height, int width) {
  require_rank(v.shape(), 1, "broadcast_spatial");
  const int c = v.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Tensor<T> out({c, height, width});
  for (int ch = 0; ch < c; ++ch) std::fill(out.data() + ch * plane, out.data() + (ch + 1) * plane, v.value()[ch]);
  const int vi = v.id;
  return v.graph->record(std::move(out), {v}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(vi)) return;
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gv = g.grad(vi);
    for (int ch = 0; ch < c; ++ch) {
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += go[ch * plane + i];
      gv[ch] += acc;
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  const int xi = x.id;
  return x.graph->record(Tensor<T>({1}, acc), {x}, [xi](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const T go = g.grad(self)[0];
    for (T& v : g.grad(xi).values()) v += go;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Var<T> l1_distance(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "l1_distance", a.shape(), b.shape());
  const std::size_t n = a.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  const int ai = a.id, bi = b.id;
  return a.graph->record(Tensor<T>({1}, acc / static_cast<T>(n)), {a, b}, [=](Graph<T>& g, int self) {
    const T go = g.grad(self)[0] / static_cast<T>(n);
    const Tensor<T>& av = g.value(ai);
    const Tensor<T>& bv = g.value(bi);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (g.requires_grad(ai)) g.grad(ai)[i] += go * sgn;
      if (g.requires_grad(bi)) g.grad(bi)[i] -= go * sgn;
    }
  });
}

template <typename T>
Var<T> mean_squared_to(Var<T> x, T target) {
  const std::size_t n = x.size();
  T acc = 0;
  for (T v : x.value().values()) acc += (v - target) * (v - target);
  const int xi = x.id;
  return x.graph->record(Tensor<T>({1}, acc / static_cast<T>(n)), {x}, [=](Graph<T>& g, int self) {
    if (!g.requires_grad(xi)) return;
    const T go = g.grad(self)[0] * T(2) / static_cast<T>(n);
    const Tensor<T>& xv = g.value(xi);
    Tensor<T>& gx = g.grad(xi);
    for (std::size_t i = 0; i < n; ++i) gx[i] += go * (xv[i] - target);
  });
}

template <typename T>
Var<T> detach(Var<T> x) {
  return x.graph->constant(x.value());
}

#define FSV2V_INSTANTIATE(T)                                                                  \
  template Var<T> conv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, int, int);                \
  template Var<T> fully_connected<T>(Var<T>, Var<T>, Var<T>);                                \
  template Var<T> matmul<T>(Var<T>, Var<T>, bool, bool);                                     \
  template Var<T> bilinear_warp<T>(Var<T>, Var<T>);                                          \
  template Var<T> softmax<T>(Var<T>, int);                                                   \
  template Var<T> normalize_features<T>(Var<T>, NormMode, T);                                \
  template Var<T> leaky_relu<T>(Var<T>, T);                                                  \
  template Var<T> tanh<T>(Var<T>);                                                           \
  template Var<T> sigmoid<T>(Var<T>);                                                        \
  template Var<T> add<T>(Var<T>, Var<T>);                                                    \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                    \
  template Var<T> add_scalar<T>(Var<T>, T);                                                  \
  template Var<T> scale<T>(Var<T>, T);                                                       \
  template Var<T> affine_channels<T>(Var<T>, Var<T>, Var<T>);                                \
  template Var<T> matte<T>(Var<T>, Var<T>, Var<T>);                                          \
  template Var<T> concat<T>(const std::vector<Var<T>>&);                                     \
  template Var<T> reshape<T>(Var<T>, Shape);                                                 \
  template Var<T> slice<T>(Var<T>, std::size_t, Shape);                                      \
  template Var<T> resize<T>(Var<T>, int, int);                                               \
  template Var<T> upsample_nearest<T>(Var<T>, int);                                          \
  template Var<T> adaptive_avg_pool<T>(Var<T>, int, int);                                    \
  template Var<T> global_avg_pool<T>(Var<T>);                                                \
  template Var<T> broadcast_spatial<T>(Var<T>, int, int);                                    \
  template Var<T> sum<T>(Var<T>);                                                            \
  template Var<T> mean<T>(Var<T>);                                                           \
  template Var<T> l1_distance<T>(Var<T>, Var<T>);                                            \
  template Var<T> mean_squared_to<T>(Var<T>, T);                                             \
  template Var<T> detach<T>(Var<T>);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)
#undef FSV2V_INSTANTIATE

}  // namespace fsv2v::nn
