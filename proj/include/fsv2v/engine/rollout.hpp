#pragma once

// Inference: autoregressive rollout over a semantic video and fine-tuning of
// E and H on the example images.

#include <deque>
#include <optional>
#include <vector>

#include "fsv2v/engine/generator.hpp"
#include "fsv2v/nn/optim.hpp"

namespace fsv2v::engine {

using nn::ParamSet;
using nn::Tensor;

struct ExampleSet {
  std::vector<Tensor<float>> images;     // [3,H,W]
  std::vector<Tensor<float>> semantics;  // [S,H,W]
  int size() const { return static_cast<int>(images.size()); }
};

struct RolloutConfig {
  // Reuse θ_H (or the style code) across steps when it cannot depend on s_t,
  // i.e. K = 1. Results are identical either way.
  bool cache_weights = true;
};

// Exactly what one step consumed.
struct StepTrace {
  int t = 0;  // 1-based frame index
  std::vector<Tensor<float>> s_window;
  std::vector<Tensor<float>> x_window;
  bool matted = false;
  int selected_example = 0;
};

class Rollout {
 public:
  Rollout(const ModelConfig& cfg, const ParamSet<float>& params, ExampleSet examples, RolloutConfig config = {});

  // Generates x̃_t for the next semantic frame.
  Tensor<float> step(const Tensor<float>& s_t);

  int frames_generated() const { return t_; }
  const StepTrace& trace() const { return trace_; }
  // Flattened conditioning used by the last step (θ_H tensors, or the style).
  const std::vector<Tensor<float>>& conditioning() const { return conditioning_; }
  // How often conditioning was computed from scratch.
  int conditioning_computations() const { return computations_; }

 private:
  ModelConfig cfg_;
  const ParamSet<float>& params_;  // must outlive the rollout
  ExampleSet examples_;
  RolloutConfig config_;
  int t_ = 0;
  std::deque<Tensor<float>> s_history_, x_history_;
  std::vector<Tensor<float>> conditioning_;
  bool have_cache_ = false;
  int computations_ = 0;
  StepTrace trace_;
};

std::vector<Tensor<float>> rollout_video(const ModelConfig& cfg, const ParamSet<float>& params,
                                         const ExampleSet& examples, const std::vector<Tensor<float>>& semantics,
                                         RolloutConfig config = {});

struct FinetuneOptions {
  int steps = 50;
  double lr = 1e-4;
  double lambda_fm = 10.0;
};

// Reconstructs each example from its own semantics (a T = 1 target) and takes
// Adam steps on E.* and H.* only; everything else is returned bit-identical.
ParamSet<float> finetune_on_examples(const ModelConfig& cfg, ParamSet<float> params, const ExampleSet& examples,
                                     const FinetuneOptions& options = {});

// Windows for frame t (1-based) from histories whose back() is the newest
// entry; positions before the first frame are zero-filled.
std::vector<Tensor<float>> semantic_window(const ModelConfig& cfg, const std::deque<Tensor<float>>& history);
std::vector<Tensor<float>> frame_window(const ModelConfig& cfg, const std::deque<Tensor<float>>& history);

}  // namespace fsv2v::engine
