#include "fsv2v/model/spade.hpp"

#include "fsv2v/model/baselines.hpp"

namespace fsv2v::model {

using namespace nn;

template <typename T>
SpadeResult<T> dynamic_spade_layer(Var<T> p_hat, std::optional<Var<T>> p_s_prev, Var<T> semantics,
                                   const LayerWeights<T>& w) {
  const int h = p_hat.dim(1), wd = p_hat.dim(2);
  Var<T> s = resize(semantics, h, wd);
  Var<T> in = p_s_prev ? concat<T>({resize(*p_s_prev, h, wd), s}) : s;
  SpadeResult<T> r;
  r.p_s = leaky_relu(conv2d(in, w.s_kernel, w.s_bias));
  r.gamma = conv2d(r.p_s, w.gamma_kernel, w.gamma_bias, 1, w.groups);
  r.beta = conv2d(r.p_s, w.beta_kernel, w.beta_bias, 1, w.groups);
  if (r.gamma.shape() != p_hat.shape()) {
    throw DimensionError("SPADE modulation " + nn::to_string(r.gamma.shape()) + " does not match features " +
                         nn::to_string(p_hat.shape()));
  }
  r.features = add(mul(r.gamma, p_hat), r.beta);
  return r;
}

template <typename T>
Var<T> synthesize_intermediate(ParamBinder<T>& p, const ModelConfig& cfg, const std::vector<Var<T>>& s_window,
                               const std::vector<Var<T>>& x_window, const Conditioning<T>& cond) {
  if (static_cast<int>(s_window.size()) != cfg.tau + 1 || static_cast<int>(x_window.size()) != cfg.tau) {
    throw ContractError("synthesize_intermediate: window must hold tau+1 semantics and tau frames (tau=" +
                        std::to_string(cfg.tau) + "), got " + std::to_string(s_window.size()) + " and " +
                        std::to_string(x_window.size()));
  }
  const bool full = cfg.variant == Variant::full;
  if (full && static_cast<int>(cond.weights.size()) != cfg.layers) {
    throw ContractError("synthesize_intermediate: missing generated weights");
  }
  if (!full && !cond.style) throw ContractError("synthesize_intermediate: baseline needs a style code");

  const int bh = cfg.base_height(), bw = cfg.base_width();
  Var<T> head = cfg.variant == Variant::encoder
                    ? reshape(linear(p, "H.style_head.fc", *cond.style), {cfg.const_channels, bh, bw})
                    : p("H.main.const");
  std::vector<Var<T>> stem_in{head};
  for (const auto& x : x_window) stem_in.push_back(resize(x, bh, bw));
  for (const auto& s : s_window) stem_in.push_back(resize(s, bh, bw));
  Var<T> x = conv(p, "H.main.stem", concat(stem_in));

  Var<T> s_t = s_window.back();
  Var<T> s_mod = s_t;
  if (cfg.variant == Variant::concatstyle) {
    s_mod = concat<T>({s_t, broadcast_spatial(*cond.style, s_t.dim(1), s_t.dim(2))});
  }
  std::optional<Var<T>> p_s;
  for (int l = 0; l < cfg.layers; ++l) {
    Var<T> p_hat = normalize_features(x, NormMode::instance);
    const LayerWeights<T> w = full ? cond.weights[static_cast<std::size_t>(l)] : static_spade_weights(p, cfg, l);
    SpadeResult<T> r = dynamic_spade_layer(p_hat, p_s, s_mod, w);
    p_s = r.p_s;
    x = r.features;
    if (cfg.variant == Variant::adain) x = adain_modulate(p, cfg, l, x, *cond.style);
    x = upsample_nearest(leaky_relu(x), 2);
    x = conv(p, "H.main.up" + std::to_string(l), x);
  }
  Var<T> y = conv(p, "H.main.head", concat<T>({leaky_relu(x), s_t}));
  return add_scalar(scale(tanh(y), T(0.5)), T(0.5));
}

void declare_synthesis(std::vector<ParamSpec>& specs, const ModelConfig& cfg) {
  const auto& ch = cfg.main_channels;
  if (cfg.variant != Variant::encoder) {
    specs.push_back({"H.main.const", {cfg.const_channels, cfg.base_height(), cfg.base_width()}, InitKind::normal, 1.0});
  }
  declare_conv(specs, "H.main.stem", cfg.const_channels + cfg.history_channels(), ch[0], 3);
  for (int l = 0; l < cfg.layers; ++l) {
    const int next = l + 1 < cfg.layers ? ch[static_cast<std::size_t>(l) + 1] : ch.back();
    declare_conv(specs, "H.main.up" + std::to_string(l), ch[static_cast<std::size_t>(l)], next, 3);
  }
  declare_conv(specs, "H.main.head", ch.back() + cfg.semantic_channels, 3, 3);
}

#define FSV2V_INSTANTIATE(T)                                                                                      \
  template SpadeResult<T> dynamic_spade_layer(Var<T>, std::optional<Var<T>>, Var<T>, const LayerWeights<T>&);     \
  template Var<T> synthesize_intermediate(ParamBinder<T>&, const ModelConfig&, const std::vector<Var<T>>&,        \
                                          const std::vector<Var<T>>&, const Conditioning<T>&);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::model
