#pragma once

// Procedural "moving shapes" domains. Each domain is a palette, a texture and a
// shape kind; clips translate the shape with integer velocity so semantic maps,
// flow and centroids are exact.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsv2v/nn/tensor.hpp"

namespace fsv2v::data {

using nn::Tensor;

enum class Texture { flat, stripes, checker };
enum class ShapeKind { disc, square, triangle };

std::string to_string(Texture t);
std::string to_string(ShapeKind s);

inline constexpr int kLabels = 4;
enum Label : std::uint8_t { background = 0, body = 1, accent = 2, marker = 3 };

using Rgb = std::array<float, 3>;

struct DomainSpec {
  int domain_id = 0;
  std::uint64_t seed = 0;
  // body, accent, background; every channel is a multiple of 1/255.
  std::array<Rgb, 3> palette{};
  Texture texture = Texture::flat;
  ShapeKind shape_kind = ShapeKind::disc;
  // Shape half-extent as a fraction of min(H, W).
  double size_frac = 0.2;

  const Rgb& color(Label label) const;
};

inline constexpr double kMinPaletteDistance = 0.3;

double color_distance(const Rgb& a, const Rgb& b);
// Distance between two palettes seen as 9-vectors.
double palette_distance(const DomainSpec& a, const DomainSpec& b);

DomainSpec generate_domain_spec(int domain_id, std::uint64_t seed);

struct Motion {
  int x0 = 0, y0 = 0;  // initial shape center, pixels
  int vx = 0, vy = 0;  // pixels per frame
};

struct Clip {
  int domain_id = 0;
  std::uint64_t seed = 0;
  std::uint64_t motion_seed = 0;
  Tensor<float> frames;     // [T,3,H,W] in [0,1]
  Tensor<float> semantics;  // [T,S,H,W] one-hot
  Tensor<float> gt_flow;    // [T-1,2,H,W], backward flow from frame t+1 into frame t
  std::vector<std::array<double, 2>> centroids;  // (x, y) per frame

  int length() const { return frames.dim(0); }
  int height() const { return frames.dim(2); }
  int width() const { return frames.dim(3); }

  Tensor<float> frame(int t) const;
  Tensor<float> semantic(int t) const;
  Tensor<float> flow(int t) const;
  std::vector<std::uint8_t> labels(int t) const;

  friend bool operator==(const Clip&, const Clip&) = default;
};

// Shape half-extent in pixels for this spec at the given resolution.
int shape_radius(const DomainSpec& spec, int height, int width);

// Random motion drawn from motion_seed: a valid start position and a non-zero
// integer velocity with components in [-3, 3].
Motion sample_motion(const DomainSpec& spec, std::uint64_t motion_seed, int height, int width);

Clip render_clip(const DomainSpec& spec, std::uint64_t motion_seed, int T, int height, int width);
Clip render_clip(const DomainSpec& spec, const Motion& motion, int T, int height, int width);

// Label map -> RGB [3,H,W]. Texture already lives in the labels (accent), and
// the marker is drawn in the accent color.
Tensor<float> paint_labels(const DomainSpec& spec, const std::vector<std::uint8_t>& labels, int height, int width);

// Same-layout persistence: manifest.json, frame_%05d.png, sem_%05d.png,
// flow.bin + flow.json, centroids.json.
void persist_clip(const Clip& clip, const std::filesystem::path& directory);
Clip load_clip(const std::filesystem::path& directory);

}  // namespace fsv2v::data
