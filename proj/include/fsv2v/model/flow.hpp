#pragma once

// Flow network W, occlusion network M, the matting compositor and example
// warping.

#include <optional>

#include "fsv2v/model/weight_gen.hpp"

namespace fsv2v::model {

enum class FlowTarget { previous, example };

template <typename T>
struct FlowOutput {
  Var<T> flow;       // [2,H,W], pixels, |.| <= max_displacement
  Var<T> occlusion;  // [1,H,W] in [0,1]
};

// Same window convention as synthesize_intermediate. The example target also
// sees the example image and its semantics.
template <typename T>
FlowOutput<T> predict_flow_occlusion(ParamBinder<T>& p, const ModelConfig& cfg, const std::vector<Var<T>>& s_window,
                                     const std::vector<Var<T>>& x_window, FlowTarget target,
                                     std::optional<Var<T>> example_image = std::nullopt,
                                     std::optional<Var<T>> example_semantics = std::nullopt);

// (1 - m) * warp(x_prev, flow) + m * h.
template <typename T>
Var<T> composite_matting(Var<T> intermediate, Var<T> previous, Var<T> flow, Var<T> occlusion);

// (1 - m_e) * warp(example, flow_e) + m_e * h.
template <typename T>
Var<T> composite_example(Var<T> intermediate, Var<T> example, Var<T> flow, Var<T> occlusion);

void declare_flow(std::vector<nn::ParamSpec>& specs, const ModelConfig& cfg);

}  // namespace fsv2v::model
