#pragma once

// One step of the sequential generator F on a graph: conditioning from the
// examples, intermediate synthesis, example warping and matting.

#include <optional>
#include <vector>

#include "fsv2v/model/flow.hpp"
#include "fsv2v/model/spade.hpp"

namespace fsv2v::engine {

using model::ModelConfig;
using nn::ParamBinder;
using nn::Var;

template <typename T>
struct ExampleVars {
  std::vector<Var<T>> images;     // e_k, [3,H,W]
  std::vector<Var<T>> semantics;  // s_{e_k}, [S,H,W]
  int size() const { return static_cast<int>(images.size()); }
};

template <typename T>
struct StepResult {
  Var<T> image;                      // x̃_t
  Var<T> intermediate;               // h̃_t
  Var<T> intermediate_example;       // h̃'_t (== h̃_t without example warping)
  std::optional<model::FlowOutput<T>> previous_flow;
  std::optional<model::FlowOutput<T>> example_flow;
  std::optional<model::AttentionResult<T>> attention;
  int selected_example = 0;
};

// Per-example features are the expensive part of conditioning for K > 1 and
// never depend on s_t, so callers compute them once.
template <typename T>
std::vector<model::LayerFeatures<T>> example_features(ParamBinder<T>& p, const ModelConfig& cfg,
                                                      const ExampleVars<T>& examples);

// θ_H (full) or style code (baselines). For K > 1 this depends on s_t through
// attention, returned via `attention`.
template <typename T>
model::Conditioning<T> condition(ParamBinder<T>& p, const ModelConfig& cfg, const ExampleVars<T>& examples,
                                 const std::vector<model::LayerFeatures<T>>& features, Var<T> s_t,
                                 std::optional<model::AttentionResult<T>>* attention);

// s_window = s_{t-τ..t}, x_window = x̃_{t-τ..t-1} (zeros where missing).
// Without a previous frame matting is skipped and x̃_t = h̃'_t.
template <typename T>
StepResult<T> generate_step(ParamBinder<T>& p, const ModelConfig& cfg, const ExampleVars<T>& examples,
                            const model::Conditioning<T>& cond, std::optional<model::AttentionResult<T>> attention,
                            const std::vector<Var<T>>& s_window, const std::vector<Var<T>>& x_window,
                            bool has_previous);

}  // namespace fsv2v::engine
