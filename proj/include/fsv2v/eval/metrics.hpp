#pragma once

// Frame-level metrics against the procedural ground truth: Frechet distance on
// random conv features, centroid error and palette segmentation scores.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsv2v/data/domains.hpp"

namespace fsv2v::eval {

using nn::Tensor;
using Video = std::vector<Tensor<float>>;  // frames [3,H,W]

// Seeded, randomly initialized 3-layer conv net with global average pooling.
class FeatureExtractor {
 public:
  static constexpr int kDim = 64;
  explicit FeatureExtractor(std::uint64_t seed);
  Eigen::VectorXd operator()(const Tensor<float>& image) const;

 private:
  std::vector<Tensor<float>> kernels_, biases_;
};

struct FrechetResult {
  double distance = 0.0;
  bool ridge_applied = false;  // fewer samples than feature dimensions
};

// Rows are samples. ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
FrechetResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

inline constexpr int kMinFidFrames = 32;

// Frames from all videos of each set are pooled. Fewer than kMinFidFrames
// frames in a set is a ContractError.
FrechetResult frechet_distance(const std::vector<Video>& a, const std::vector<Video>& b, std::uint64_t feature_seed);

// Per-pixel nearest palette entry: 0 background, 1 body, 2 accent (the marker
// is painted in the accent color, so it lands in class 2).
std::vector<std::uint8_t> classify_palette(const Tensor<float>& image, const data::DomainSpec& spec);

inline constexpr int kSegClasses = 3;
// Collapses the marker label onto accent.
inline std::uint8_t seg_class(std::uint8_t label) { return label == data::marker ? std::uint8_t{data::accent} : label; }

struct PoseError {
  double mean_px = 0.0;
  std::vector<int> missing_frames;  // no foreground found; scored at the image diagonal
};

PoseError centroid_pose_error(const Video& output, const std::vector<std::array<double, 2>>& gt_centroids,
                              const data::DomainSpec& spec);

struct SegScores {
  double pixel_acc = 0.0;
  double miou = 0.0;
};

// Classes absent from both prediction and truth are left out of the mean.
SegScores segmentation_scores(const Video& output, const std::vector<std::vector<std::uint8_t>>& labels,
                              const data::DomainSpec& spec);

// mean |a - b| over every frame and channel.
double mean_l1(const Video& a, const Video& b);

}  // namespace fsv2v::eval
