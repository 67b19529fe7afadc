#include "fsv2v/eval/heldout.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace fsv2v::eval {

io::Json HeldoutMetrics::to_json() const {
  io::Json d = io::Json::object();
  for (const auto& [id, m] : per_domain) {
    d[std::to_string(id)] = {{"pose_error_px", m.pose_error_px}, {"pixel_acc", m.pixel_acc}, {"miou", m.miou}, {"l1", m.l1}};
  }
  return {{"pose_error_px", pose_error_px}, {"pixel_acc", pixel_acc}, {"miou", miou}, {"l1", l1},
          {"fid", std::isfinite(fid) ? io::Json(fid) : io::Json(nullptr)}, {"missing_frames", missing_frames}, {"per_domain", d}};
}

std::vector<int> example_frames(int clip_length, int k) {
  if (k < 1) throw ContractError("need at least one example");
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(std::min(clip_length - 1, (2 * i + 1) * clip_length / (2 * k)));
  return out;
}

engine::ExampleSet example_set(const data::Clip& clip, int k) {
  engine::ExampleSet ex;
  for (int f : example_frames(clip.length(), k)) {
    ex.images.push_back(clip.frame(f));
    ex.semantics.push_back(clip.semantic(f));
  }
  return ex;
}

HeldoutMetrics evaluate_heldout(const model::ModelConfig& cfg, const nn::ParamSet<float>& params,
                                const data::Dataset& heldout, const HeldoutOptions& opt) {
  std::map<int, std::vector<const data::Clip*>> by_domain;
  for (const auto& c : heldout.clips) by_domain[c.domain_id].push_back(&c);
  HeldoutMetrics out;
  std::vector<Video> produced, truth;
  int domains = 0;
  for (const auto& [id, clips] : by_domain) {
    if (clips.size() < 2) throw ContractError("held-out domain " + std::to_string(id) + " needs at least two clips");
    const auto& spec = heldout.spec(id);
    const engine::ExampleSet ex = example_set(*clips[0], opt.k);
    const nn::ParamSet<float>* use = &params;
    nn::ParamSet<float> tuned;
    if (opt.finetune_steps > 0) {
      engine::FinetuneOptions fo;
      fo.steps = opt.finetune_steps;
      fo.lr = opt.finetune_lr;
      tuned = engine::finetune_on_examples(cfg, params, ex, fo);
      use = &tuned;
    }
    DomainMetrics dm;
    for (std::size_t j = 1; j < clips.size(); ++j) {
      const data::Clip& c = *clips[j];
      std::vector<nn::Tensor<float>> sem;
      Video gt;
      std::vector<std::vector<std::uint8_t>> labels;
      for (int t = 0; t < c.length(); ++t) {
        sem.push_back(c.semantic(t));
        gt.push_back(c.frame(t));
        labels.push_back(c.labels(t));
      }
      Video x = engine::rollout_video(cfg, *use, ex, sem);
      const auto pose = centroid_pose_error(x, c.centroids, spec);
      const auto seg = segmentation_scores(x, labels, spec);
      dm.pose_error_px += pose.mean_px;
      dm.pixel_acc += seg.pixel_acc;
      dm.miou += seg.miou;
      dm.l1 += mean_l1(x, gt);
      out.missing_frames += static_cast<int>(pose.missing_frames.size());
      produced.push_back(std::move(x));
      truth.push_back(std::move(gt));
    }
    const double n = static_cast<double>(clips.size() - 1);
    dm.pose_error_px /= n;
    dm.pixel_acc /= n;
    dm.miou /= n;
    dm.l1 /= n;
    out.per_domain[id] = dm;
    out.pose_error_px += dm.pose_error_px;
    out.pixel_acc += dm.pixel_acc;
    out.miou += dm.miou;
    out.l1 += dm.l1;
    ++domains;
  }
  if (domains == 0) throw ContractError("held-out dataset is empty");
  out.pose_error_px /= domains;
  out.pixel_acc /= domains;
  out.miou /= domains;
  out.l1 /= domains;
  std::size_t frames = 0;
  for (const auto& v : produced) frames += v.size();
  if (opt.compute_fid && frames >= static_cast<std::size_t>(kMinFidFrames)) {
    out.fid = frechet_distance(produced, truth, opt.fid_seed).distance;
  } else {
    if (opt.compute_fid)
      std::cerr << "warning: only " << frames << " held-out frames, FID needs " << kMinFidFrames << "; reporting null\n";
    out.fid = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace fsv2v::eval
