#include "fsv2v/model/model.hpp"

#include "fsv2v/model/baselines.hpp"
#include "fsv2v/model/discriminator.hpp"
#include "fsv2v/model/flow.hpp"
#include "fsv2v/model/spade.hpp"

namespace fsv2v::model {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::encoder: return "encoder";
    case Variant::concatstyle: return "concatstyle";
    case Variant::adain: return "adain";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::full, Variant::encoder, Variant::concatstyle, Variant::adain})
    if (to_string(v) == name) return v;
  throw ConfigError("unknown model variant '" + name + "' (expected full, encoder, concatstyle or adain)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (layers < 1) fail("layers must be >= 1");
  if (static_cast<int>(main_channels.size()) != layers) fail("main_channels needs one entry per layer");
  if (static_cast<int>(feature_channels.size()) != layers) fail("feature_channels needs one entry per layer");
  if (height % (1 << layers) || width % (1 << layers) || base_height() < 1) {
    fail("height and width must be divisible by 2^layers");
  }
  if (height % 4 || width % 4) fail("height and width must be divisible by 4 for the flow network");
  if (tau < 1) fail("tau must be >= 1");
  if (k_max < 1) fail("k_max must be >= 1");
  if (generated_kernel != 1 && generated_kernel != 3) fail("generated_kernel must be 1 or 3");
  if (attention_res < 1 || pool < 1 || hidden < 1 || spade_channels < 1 || style_dim < 1) {
    fail("sizes must be positive");
  }
  if (max_displacement <= 0) fail("max_displacement must be positive");
}

std::vector<nn::ParamSpec> declare_model(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<nn::ParamSpec> specs;
  if (cfg.variant == Variant::full) {
    declare_weight_gen(specs, cfg);
  } else {
    declare_baseline(specs, cfg);
  }
  declare_synthesis(specs, cfg);
  declare_flow(specs, cfg);
  declare_discriminators(specs, cfg);
  return specs;
}

nn::ParamSet<float> initialize_model(const ModelConfig& cfg, std::uint64_t seed) {
  auto params = nn::initialize(declare_model(cfg), seed);
  if (cfg.variant == Variant::full) {
    for (int l = 0; l < cfg.layers; ++l) {
      auto bias = static_spade_layout(cfg, l, seed);
      auto& slot = params.at("E.P.layer" + std::to_string(l) + ".fc2.bias");
      slot = nn::Tensor<float>(slot.shape(), std::move(bias));
    }
  }
  return params;
}

bool is_discriminator_param(const std::string& name) { return starts_with(name, "D."); }
bool is_generator_param(const std::string& name) { return !is_discriminator_param(name); }
bool is_finetune_param(const std::string& name) { return starts_with(name, "E.") || starts_with(name, "H."); }

}  // namespace fsv2v::model
