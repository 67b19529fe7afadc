#include "fsv2v/model/flow.hpp"

namespace fsv2v::model {

using namespace nn;

namespace {

const char* flow_prefix(FlowTarget t) { return t == FlowTarget::previous ? "W.prev" : "W.example"; }
const char* occ_prefix(FlowTarget t) { return t == FlowTarget::previous ? "M.prev" : "M.example"; }

int flow_in_channels(const ModelConfig& cfg, FlowTarget t) {
  return cfg.history_channels() + (t == FlowTarget::example ? 3 + cfg.semantic_channels : 0);
}

}  // namespace

// Encoder-decoder at half and quarter resolution; both heads read the shared
// half-resolution decoder features and are upsampled back.
template <typename T>
FlowOutput<T> predict_flow_occlusion(ParamBinder<T>& p, const ModelConfig& cfg, const std::vector<Var<T>>& s_window,
                                     const std::vector<Var<T>>& x_window, FlowTarget target,
                                     std::optional<Var<T>> example_image, std::optional<Var<T>> example_semantics) {
  std::vector<Var<T>> parts(x_window.begin(), x_window.end());
  parts.insert(parts.end(), s_window.begin(), s_window.end());
  if (target == FlowTarget::example) {
    if (!example_image || !example_semantics) throw ContractError("example flow needs the example image and semantics");
    parts.push_back(*example_image);
    parts.push_back(*example_semantics);
  }
  Var<T> in = concat(parts);
  if (in.dim(0) != flow_in_channels(cfg, target)) {
    throw DimensionError("flow network input has " + std::to_string(in.dim(0)) + " channels, expected " +
                         std::to_string(flow_in_channels(cfg, target)));
  }
  const std::string w = flow_prefix(target), m = occ_prefix(target);
  Var<T> half = leaky_relu(conv(p, w + ".enc1", in, 2));
  Var<T> quarter = leaky_relu(conv(p, w + ".enc2", half, 2));
  quarter = leaky_relu(conv(p, w + ".enc3", quarter));
  Var<T> dec = leaky_relu(conv(p, w + ".dec", concat<T>({upsample_nearest(quarter, 2), half})));
  FlowOutput<T> out;
  out.flow = resize(scale(tanh(conv(p, w + ".flow", dec)), static_cast<T>(cfg.max_displacement)), cfg.height,
                    cfg.width);
  out.occlusion = resize(sigmoid(conv(p, m + ".occ", dec)), cfg.height, cfg.width);
  return out;
}

template <typename T>
Var<T> composite_matting(Var<T> intermediate, Var<T> previous, Var<T> flow, Var<T> occlusion) {
  return matte(bilinear_warp(previous, flow), intermediate, occlusion);
}

template <typename T>
Var<T> composite_example(Var<T> intermediate, Var<T> example, Var<T> flow, Var<T> occlusion) {
  return matte(bilinear_warp(example, flow), intermediate, occlusion);
}

void declare_flow(std::vector<ParamSpec>& specs, const ModelConfig& cfg) {
  const int c = cfg.flow_channels;
  for (FlowTarget t : {FlowTarget::previous, FlowTarget::example}) {
    if (t == FlowTarget::example && !cfg.warp_example) continue;
    const std::string w = flow_prefix(t), m = occ_prefix(t);
    declare_conv(specs, w + ".enc1", flow_in_channels(cfg, t), c, 3);
    declare_conv(specs, w + ".enc2", c, c, 3);
    declare_conv(specs, w + ".enc3", c, c, 3);
    declare_conv(specs, w + ".dec", 2 * c, c, 3);
    specs.push_back({w + ".flow.weight", {2, c, 3, 3}, InitKind::zeros, 0.0});
    specs.push_back({w + ".flow.bias", {2}, InitKind::zeros, 0.0});
    specs.push_back({m + ".occ.weight", {1, c, 3, 3}, InitKind::zeros, 0.0});
    specs.push_back({m + ".occ.bias", {1}, InitKind::zeros, 0.0});
  }
}

#define FSV2V_INSTANTIATE(T)                                                                                    \
  template FlowOutput<T> predict_flow_occlusion(ParamBinder<T>&, const ModelConfig&, const std::vector<Var<T>>&, \
                                                const std::vector<Var<T>>&, FlowTarget, std::optional<Var<T>>,   \
                                                std::optional<Var<T>>);                                         \
  template Var<T> composite_matting(Var<T>, Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> composite_example(Var<T>, Var<T>, Var<T>, Var<T>);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::model
