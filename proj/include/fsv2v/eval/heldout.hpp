#pragma once

// Few-shot evaluation on domains never seen in training. Per domain, clip 0
// supplies the K example frames and every other clip is a target video.

#include <map>

#include "fsv2v/data/dataset.hpp"
#include "fsv2v/engine/rollout.hpp"
#include "fsv2v/eval/metrics.hpp"
#include "fsv2v/io/binary.hpp"

namespace fsv2v::eval {

struct HeldoutOptions {
  int k = 1;
  int finetune_steps = 0;
  double finetune_lr = 1e-4;
  std::uint64_t fid_seed = 0;
  bool compute_fid = true;
};

struct DomainMetrics {
  double pose_error_px = 0, pixel_acc = 0, miou = 0, l1 = 0;
};

struct HeldoutMetrics {
  double pose_error_px = 0;
  double pixel_acc = 0;
  double miou = 0;
  double l1 = 0;  // mean |output - ground truth|
  double fid = 0;  // NaN (null in JSON) when there are too few frames
  int missing_frames = 0;
  std::map<int, DomainMetrics> per_domain;

  io::Json to_json() const;
};

// Frames of `clip` used as examples: K evenly spaced, centered picks.
std::vector<int> example_frames(int clip_length, int k);
engine::ExampleSet example_set(const data::Clip& clip, int k);

HeldoutMetrics evaluate_heldout(const model::ModelConfig& cfg, const nn::ParamSet<float>& params,
                                const data::Dataset& heldout, const HeldoutOptions& options);

}  // namespace fsv2v::eval
