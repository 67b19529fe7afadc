#include "fsv2v/model/discriminator.hpp"

namespace fsv2v::model {

using namespace nn;

namespace {

template <typename T>
DiscOutput<T> patch_discriminator(ParamBinder<T>& p, const std::string& prefix, Var<T> x) {
  DiscOutput<T> out;
  for (int i = 1; i <= 3; ++i) {
    x = leaky_relu(conv(p, prefix + ".conv" + std::to_string(i), x, 2));
    out.features.push_back(x);
  }
  out.logits = conv(p, prefix + ".out", x);
  return out;
}

void declare_patch(std::vector<ParamSpec>& specs, const std::string& prefix, int in, int c) {
  declare_conv(specs, prefix + ".conv1", in, c, 3);
  declare_conv(specs, prefix + ".conv2", c, 2 * c, 3);
  declare_conv(specs, prefix + ".conv3", 2 * c, 2 * c, 3);
  declare_conv(specs, prefix + ".out", 2 * c, 1, 3);
}

}  // namespace

template <typename T>
DiscOutput<T> image_discriminator(ParamBinder<T>& p, const ModelConfig&, Var<T> image, Var<T> semantics) {
  return patch_discriminator(p, "D.img", concat<T>({image, semantics}));
}

template <typename T>
DiscOutput<T> temporal_discriminator(ParamBinder<T>& p, const ModelConfig&, const std::vector<Var<T>>& frames) {
  if (frames.size() != static_cast<std::size_t>(kTemporalFrames)) {
    throw ContractError("temporal discriminator takes 3 frames, got " + std::to_string(frames.size()));
  }
  return patch_discriminator(p, "D.tmp", concat(frames));
}

void declare_discriminators(std::vector<ParamSpec>& specs, const ModelConfig& cfg) {
  declare_patch(specs, "D.img", 3 + cfg.semantic_channels, cfg.disc_channels);
  declare_patch(specs, "D.tmp", 3 * kTemporalFrames, cfg.disc_channels);
}

#define FSV2V_INSTANTIATE(T)                                                                             \
  template DiscOutput<T> image_discriminator(ParamBinder<T>&, const ModelConfig&, Var<T>, Var<T>);       \
  template DiscOutput<T> temporal_discriminator(ParamBinder<T>&, const ModelConfig&, const std::vector<Var<T>>&);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::model
