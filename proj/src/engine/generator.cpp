#include "fsv2v/engine/generator.hpp"

#include "fsv2v/model/baselines.hpp"

namespace fsv2v::engine {

using namespace model;

template <typename T>
std::vector<LayerFeatures<T>> example_features(ParamBinder<T>& p, const ModelConfig& cfg,
                                               const ExampleVars<T>& examples) {
  std::vector<LayerFeatures<T>> out;
  if (cfg.variant != Variant::full) return out;
  for (int k = 0; k < examples.size(); ++k) {
    out.push_back(extract_example_features(p, cfg, examples.images[static_cast<std::size_t>(k)],
                                           examples.semantics[static_cast<std::size_t>(k)]));
  }
  return out;
}

template <typename T>
Conditioning<T> condition(ParamBinder<T>& p, const ModelConfig& cfg, const ExampleVars<T>& examples,
                          const std::vector<LayerFeatures<T>>& features, Var<T> s_t,
                          std::optional<AttentionResult<T>>* attention) {
  if (examples.size() < 1) throw ContractError("example set is empty");
  if (examples.images.size() != examples.semantics.size()) {
    throw ContractError("example images and semantics differ in count");
  }
  Conditioning<T> cond;
  if (cfg.variant != Variant::full) {
    if (examples.size() != 1) {
      throw ContractError("baseline '" + to_string(cfg.variant) + "' supports exactly one example, got K=" +
                          std::to_string(examples.size()));
    }
    cond.style = encode_style(p, cfg, examples.images[0]);
    return cond;
  }
  if (static_cast<int>(features.size()) != examples.size()) throw ContractError("example features not computed");
  std::optional<AttentionResult<T>> att;
  if (examples.size() > 1) att = compute_attention(p, cfg, examples.semantics, s_t);
  cond.weights = generate_spade_weights(p, cfg, aggregate_features(cfg, features, att ? &*att : nullptr));
  if (attention) *attention = std::move(att);
  return cond;
}

template <typename T>
StepResult<T> generate_step(ParamBinder<T>& p, const ModelConfig& cfg, const ExampleVars<T>& examples,
                            const Conditioning<T>& cond, std::optional<AttentionResult<T>> attention,
                            const std::vector<Var<T>>& s_window, const std::vector<Var<T>>& x_window,
                            bool has_previous) {
  StepResult<T> r;
  r.intermediate = synthesize_intermediate(p, cfg, s_window, x_window, cond);
  r.intermediate_example = r.intermediate;
  r.selected_example = select_example(attention ? &*attention : nullptr);
  r.attention = std::move(attention);
  if (cfg.warp_example) {
    const auto k = static_cast<std::size_t>(r.selected_example);
    r.example_flow = predict_flow_occlusion(p, cfg, s_window, x_window, FlowTarget::example,
                                            std::optional<Var<T>>(examples.images[k]),
                                            std::optional<Var<T>>(examples.semantics[k]));
    r.intermediate_example =
        composite_example(r.intermediate, examples.images[k], r.example_flow->flow, r.example_flow->occlusion);
  }
  r.image = r.intermediate_example;
  if (has_previous) {
    r.previous_flow = predict_flow_occlusion(p, cfg, s_window, x_window, FlowTarget::previous);
    r.image = composite_matting(r.intermediate_example, x_window.back(), r.previous_flow->flow,
                                r.previous_flow->occlusion);
  }
  return r;
}

#define FSV2V_INSTANTIATE(T)                                                                                     \
  template std::vector<LayerFeatures<T>> example_features(ParamBinder<T>&, const ModelConfig&,                   \
                                                          const ExampleVars<T>&);                                \
  template Conditioning<T> condition(ParamBinder<T>&, const ModelConfig&, const ExampleVars<T>&,                 \
                                     const std::vector<LayerFeatures<T>>&, Var<T>,                               \
                                     std::optional<AttentionResult<T>>*);                                        \
  template StepResult<T> generate_step(ParamBinder<T>&, const ModelConfig&, const ExampleVars<T>&,               \
                                       const Conditioning<T>&, std::optional<AttentionResult<T>>,                \
                                       const std::vector<Var<T>>&, const std::vector<Var<T>>&, bool);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::engine
