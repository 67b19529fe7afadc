#include "fsv2v/model/baselines.hpp"

namespace fsv2v::model {

using namespace nn;

std::string style_prefix(Variant v) {
  switch (v) {
    case Variant::encoder: return "E.style_enc";
    case Variant::concatstyle: return "E.style_cat";
    case Variant::adain: return "E.style_ada";
    case Variant::full: break;
  }
  throw ContractError("the full model has no style encoder");
}

std::string static_spade_prefix(Variant v) {
  switch (v) {
    case Variant::encoder: return "H.spade_enc";
    case Variant::concatstyle: return "H.spade_cat";
    case Variant::adain: return "H.spade_ada";
    case Variant::full: break;
  }
  throw ContractError("the full model has no static SPADE branch");
}

int static_spade_in_channels(const ModelConfig& cfg, int layer) {
  return cfg.spade_in_channels(layer) + (cfg.variant == Variant::concatstyle ? cfg.style_dim : 0);
}

template <typename T>
Var<T> encode_style(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> image) {
  const std::string prefix = style_prefix(cfg.variant);
  Var<T> x = image;
  for (int l = 0; l < cfg.layers; ++l) x = leaky_relu(conv(p, prefix + ".level" + std::to_string(l), x, 2));
  return linear(p, prefix + ".fc", global_avg_pool(x));
}

template <typename T>
LayerWeights<T> static_spade_weights(ParamBinder<T>& p, const ModelConfig& cfg, int layer) {
  const std::string n = static_spade_prefix(cfg.variant) + ".layer" + std::to_string(layer);
  LayerWeights<T> w;
  w.s_kernel = p(n + ".S.weight");
  w.s_bias = p(n + ".S.bias");
  w.gamma_kernel = p(n + ".gamma.weight");
  w.gamma_bias = p(n + ".gamma.bias");
  w.beta_kernel = p(n + ".beta.weight");
  w.beta_bias = p(n + ".beta.bias");
  return w;
}

template <typename T>
Var<T> adain_affine(Var<T> features, Var<T> scale_v, Var<T> bias) {
  return affine_channels(normalize_features(features, NormMode::instance), scale_v, bias);
}

template <typename T>
Var<T> adain_modulate(ParamBinder<T>& p, const ModelConfig&, int layer, Var<T> features, Var<T> style) {
  const std::string n = "H.adain.layer" + std::to_string(layer);
  const int c = features.dim(0);
  Var<T> out = linear(p, n + ".fc2", leaky_relu(linear(p, n + ".fc1", style)));
  if (out.size() != static_cast<std::size_t>(2 * c)) {
    throw DimensionError("adain layer " + std::to_string(layer) + " emits " + std::to_string(out.size()) +
                         " values for " + std::to_string(c) + " channels");
  }
  return adain_affine(features, add_scalar(slice(out, 0, {c}), T(1)), slice(out, static_cast<std::size_t>(c), {c}));
}

void declare_baseline(std::vector<ParamSpec>& specs, const ModelConfig& cfg) {
  const std::string sp = style_prefix(cfg.variant), hp = static_spade_prefix(cfg.variant);
  int in = 3;
  for (int l = 0; l < cfg.layers; ++l) {
    const int out = cfg.feature_channels[static_cast<std::size_t>(l)];
    declare_conv(specs, sp + ".level" + std::to_string(l), in, out, 3);
    in = out;
  }
  declare_linear(specs, sp + ".fc", in, cfg.style_dim);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string n = hp + ".layer" + std::to_string(l);
    const int ch = cfg.main_channels[static_cast<std::size_t>(l)];
    declare_conv(specs, n + ".S", static_spade_in_channels(cfg, l), cfg.spade_channels, cfg.generated_kernel);
    declare_conv(specs, n + ".gamma", cfg.spade_channels, ch, cfg.generated_kernel, 0.5);
    specs.back() = {n + ".gamma.bias", {ch}, InitKind::constant, 1.0};
    declare_conv(specs, n + ".beta", cfg.spade_channels, ch, cfg.generated_kernel, 0.5);
  }
  if (cfg.variant == Variant::encoder) {
    declare_linear(specs, "H.style_head.fc", cfg.style_dim, cfg.const_channels * cfg.base_height() * cfg.base_width());
  }
  if (cfg.variant == Variant::adain) {
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string n = "H.adain.layer" + std::to_string(l);
      declare_linear(specs, n + ".fc1", cfg.style_dim, cfg.style_dim);
      declare_linear(specs, n + ".fc2", cfg.style_dim, 2 * cfg.main_channels[static_cast<std::size_t>(l)], 0.1);
    }
  }
}

#define FSV2V_INSTANTIATE(T)                                                                  \
  template Var<T> encode_style(ParamBinder<T>&, const ModelConfig&, Var<T>);                  \
  template LayerWeights<T> static_spade_weights(ParamBinder<T>&, const ModelConfig&, int);    \
  template Var<T> adain_affine(Var<T>, Var<T>, Var<T>);                                       \
  template Var<T> adain_modulate(ParamBinder<T>&, const ModelConfig&, int, Var<T>, Var<T>);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::model
