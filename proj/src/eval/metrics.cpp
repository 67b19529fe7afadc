#include "fsv2v/eval/metrics.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include "fsv2v/nn/ops.hpp"

namespace fsv2v::eval {

namespace {

constexpr int kWidths[3] = {16, 32, FeatureExtractor::kDim};

// Symmetric PSD square root via eigendecomposition, negatives clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int in = 3;
  for (int w : kWidths) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (in * 9)));
    Tensor<float> k({w, in, 3, 3});
    for (auto& v : k.values()) v = static_cast<float>(d(rng));
    kernels_.push_back(std::move(k));
    biases_.emplace_back(nn::Shape{w});
    in = w;
  }
}

Eigen::VectorXd FeatureExtractor::operator()(const Tensor<float>& image) const {
  nn::Graph<float> g(false);
  nn::Var<float> x = g.constant(image);
  for (std::size_t i = 0; i < kernels_.size(); ++i)
    x = nn::leaky_relu(nn::conv2d(x, g.constant(kernels_[i]), g.constant(biases_[i]), 2));
  const auto& pooled = nn::global_avg_pool(x).value();
  Eigen::VectorXd f(kDim);
  for (int i = 0; i < kDim; ++i) f[i] = pooled[static_cast<std::size_t>(i)];
  return f;
}

FrechetResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw DimensionError("frechet_distance: feature dimensions differ");
  if (a.rows() < 2 || b.rows() < 2) throw ContractError("frechet_distance needs at least two samples per set");
  FrechetResult r;
  const auto d = a.cols();
  auto stats = [&](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
    if (x.rows() < d) {
      cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
      r.ridge_applied = true;
    }
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  stats(a, ma, ca);
  stats(b, mb, cb);
  // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}), which is symmetric.
  const Eigen::MatrixXd sa = psd_sqrt(ca);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sa * cb * sa, Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  r.distance = std::max(0.0, (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross);
  return r;
}

FrechetResult frechet_distance(const std::vector<Video>& a, const std::vector<Video>& b, std::uint64_t seed) {
  const FeatureExtractor fx(seed);
  auto features = [&](const std::vector<Video>& set, const char* which) {
    std::size_t n = 0;
    for (const auto& v : set) n += v.size();
    if (n < static_cast<std::size_t>(kMinFidFrames)) {
      throw ContractError(std::string("FID: set ") + which + " has " + std::to_string(n) + " frames, need at least " +
                          std::to_string(kMinFidFrames));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), FeatureExtractor::kDim);
    Eigen::Index row = 0;
    for (const auto& v : set)
      for (const auto& f : v) m.row(row++) = fx(f).transpose();
    return m;
  };
  auto r = frechet_distance(features(a, "a"), features(b, "b"));
  if (r.ridge_applied) {
    std::cerr << "warning: FID on fewer frames than feature dimensions (" << FeatureExtractor::kDim
              << "); covariance ridge 1e-6 applied\n";
  }
  return r;
}

std::vector<std::uint8_t> classify_palette(const Tensor<float>& image, const data::DomainSpec& spec) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("classify_palette expects [3,H,W]");
  const int H = image.dim(1), W = image.dim(2);
  const data::Label order[kSegClasses] = {data::background, data::body, data::accent};
  std::vector<std::uint8_t> out(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const data::Rgb px{image.at(0, y, x), image.at(1, y, x), image.at(2, y, x)};
      double best = 1e30;
      std::uint8_t arg = 0;
      for (auto l : order) {
        const double d = data::color_distance(px, spec.color(l));
        if (d < best) {
          best = d;
          arg = l;
        }
      }
      out[static_cast<std::size_t>(y) * W + x] = arg;
    }
  return out;
}

PoseError centroid_pose_error(const Video& output, const std::vector<std::array<double, 2>>& gt,
                              const data::DomainSpec& spec) {
  if (output.size() != gt.size()) {
    throw ContractError("pose error: " + std::to_string(output.size()) + " frames vs " + std::to_string(gt.size()) +
                        " centroids");
  }
  PoseError r;
  if (output.empty()) return r;
  double sum = 0;
  for (std::size_t t = 0; t < output.size(); ++t) {
    const int H = output[t].dim(1), W = output[t].dim(2);
    const auto cls = classify_palette(output[t], spec);
    double sx = 0, sy = 0;
    long n = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (cls[static_cast<std::size_t>(y) * W + x] != data::background) {
          sx += x;
          sy += y;
          ++n;
        }
    if (n == 0) {
      r.missing_frames.push_back(static_cast<int>(t));
      sum += std::hypot(H, W);
      continue;
    }
    sum += std::hypot(sx / n - gt[t][0], sy / n - gt[t][1]);
  }
  r.mean_px = sum / static_cast<double>(output.size());
  return r;
}

SegScores segmentation_scores(const Video& output, const std::vector<std::vector<std::uint8_t>>& labels,
                              const data::DomainSpec& spec) {
  if (output.size() != labels.size()) throw ContractError("segmentation: frame count mismatch");
  long inter[kSegClasses] = {}, uni[kSegClasses] = {};
  long correct = 0, total = 0;
  for (std::size_t t = 0; t < output.size(); ++t) {
    const auto pred = classify_palette(output[t], spec);
    if (pred.size() != labels[t].size()) throw DimensionError("segmentation: label map size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int p = pred[i], g = seg_class(labels[t][i]);
      correct += p == g;
      ++total;
      if (p == g) {
        ++inter[p];
        ++uni[p];
      } else {
        ++uni[p];
        ++uni[g];
      }
    }
  }
  SegScores s;
  if (total == 0) return s;
  s.pixel_acc = static_cast<double>(correct) / total;
  double iou = 0;
  int classes = 0;
  for (int c = 0; c < kSegClasses; ++c) {
    if (uni[c] == 0) continue;
    iou += static_cast<double>(inter[c]) / uni[c];
    ++classes;
  }
  s.miou = classes ? iou / classes : 0.0;
  return s;
}

double mean_l1(const Video& a, const Video& b) {
  if (a.size() != b.size()) throw ContractError("mean_l1: videos differ in length");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].shape() != b[t].shape()) throw DimensionError("mean_l1: frame shapes differ");
    for (std::size_t i = 0; i < a[t].size(); ++i) s += std::abs(static_cast<double>(a[t][i]) - b[t][i]);
    n += a[t].size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace fsv2v::eval
