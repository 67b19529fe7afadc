#include "fsv2v/data/domains.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "fsv2v/io/binary.hpp"
#include "fsv2v/io/png.hpp"
#include "fsv2v/nn/params.hpp"

namespace fsv2v::data {

namespace {

constexpr double kMinIntraDistance = 0.4;
constexpr int kFormatVersion = 1;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

float quantized(std::mt19937_64& rng) {
  return static_cast<float>(std::uniform_int_distribution<int>(0, 255)(rng)) / 255.0f;
}

DomainSpec candidate(int domain_id, std::uint64_t seed, int attempt) {
  std::mt19937_64 rng(mix(mix(seed, static_cast<std::uint64_t>(domain_id)), static_cast<std::uint64_t>(attempt)));
  DomainSpec s;
  s.domain_id = domain_id;
  s.seed = seed;
  for (auto& c : s.palette)
    for (auto& v : c) v = quantized(rng);
  s.texture = static_cast<Texture>(std::uniform_int_distribution<int>(0, 2)(rng));
  s.shape_kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  s.size_frac = std::uniform_real_distribution<double>(0.17, 0.24)(rng);
  return s;
}

bool palette_spread(const DomainSpec& s) {
  return color_distance(s.palette[0], s.palette[1]) >= kMinIntraDistance &&
         color_distance(s.palette[0], s.palette[2]) >= kMinIntraDistance &&
         color_distance(s.palette[1], s.palette[2]) >= kMinIntraDistance;
}

bool inside(ShapeKind kind, int lx, int ly, int r) {
  switch (kind) {
    case ShapeKind::disc:
      return lx * lx + ly * ly <= r * r;
    case ShapeKind::square: {
      const int s = static_cast<int>(std::lround(0.85 * r));
      return std::abs(lx) <= s && std::abs(ly) <= s;
    }
    case ShapeKind::triangle:
      return ly <= r && 2 * std::abs(lx) <= ly + r;
  }
  return false;
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

Label local_label(const DomainSpec& spec, int lx, int ly, int r) {
  if (!inside(spec.shape_kind, lx, ly, r)) return background;
  const int m = std::max(1, r / 5);
  const int my = spec.shape_kind == ShapeKind::triangle ? r / 2 : -r / 2;
  if (std::abs(lx) <= m && std::abs(ly - my) <= m) return marker;
  switch (spec.texture) {
    case Texture::flat:
      return 4 * (lx * lx + ly * ly) <= r * r ? accent : body;
    case Texture::stripes:
      return floor_div(lx + r, std::max(1, r / 3)) % 2 ? accent : body;
    case Texture::checker: {
      const int w = std::max(2, r / 2);
      return (floor_div(lx + r, w) + floor_div(ly + r, w)) % 2 ? accent : body;
    }
  }
  return body;
}

struct Bounds {
  int lo_x, hi_x, lo_y, hi_y;
};

Bounds center_bounds(const DomainSpec& spec, int height, int width) {
  const int r = shape_radius(spec, height, width);
  Bounds b{r + 1, width - 2 - r, r + 1, height - 2 - r};
  if (b.hi_x < b.lo_x || b.hi_y < b.lo_y) {
    throw ContractError("shape of radius " + std::to_string(r) + " does not fit a " + std::to_string(height) + "x" +
                        std::to_string(width) + " frame");
  }
  return b;
}

void reflect(int& p, int& v, int lo, int hi) {
  p += v;
  for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
    if (p > hi) p = 2 * hi - p;
    if (p < lo) p = 2 * lo - p;
    v = -v;
  }
  p = std::clamp(p, lo, hi);
}

std::string indexed(const char* stem, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d.png", stem, t);
  return buf;
}

}  // namespace

std::string to_string(Texture t) {
  switch (t) {
    case Texture::flat: return "flat";
    case Texture::stripes: return "stripes";
    case Texture::checker: return "checker";
  }
  return "?";
}

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

const Rgb& DomainSpec::color(Label label) const {
  switch (label) {
    case background: return palette[2];
    case body: return palette[0];
    case accent:
    case marker: return palette[1];
  }
  return palette[2];
}

double color_distance(const Rgb& a, const Rgb& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += std::pow(double(a[c]) - b[c], 2);
  return std::sqrt(s);
}

double palette_distance(const DomainSpec& a, const DomainSpec& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) s += std::pow(double(a.palette[i][c]) - b.palette[i][c], 2);
  return std::sqrt(s);
}

// Domains are accepted in id order, each rejecting candidates too close to any
// earlier id, so a spec depends only on (id, seed) and ids 0..n are mutually
// distinct.
DomainSpec generate_domain_spec(int domain_id, std::uint64_t seed) {
  if (domain_id < 0) throw ContractError("domain_id must be >= 0, got " + std::to_string(domain_id));
  std::vector<DomainSpec> accepted;
  for (int id = 0; id <= domain_id; ++id) {
    bool found = false;
    for (int attempt = 0; attempt < 100000 && !found; ++attempt) {
      DomainSpec c = candidate(id, seed, attempt);
      if (!palette_spread(c)) continue;
      bool far = true;
      for (const auto& prev : accepted) far = far && palette_distance(c, prev) >= kMinPaletteDistance;
      if (!far) continue;
      accepted.push_back(c);
      found = true;
    }
    if (!found) throw ContractError("palette space exhausted at domain " + std::to_string(id));
  }
  return accepted.back();
}

int shape_radius(const DomainSpec& spec, int height, int width) {
  return std::max(2, static_cast<int>(std::lround(spec.size_frac * std::min(height, width))));
}

Motion sample_motion(const DomainSpec& spec, std::uint64_t motion_seed, int height, int width) {
  const Bounds b = center_bounds(spec, height, width);
  std::mt19937_64 rng(mix(motion_seed, nn::fnv1a("motion", static_cast<std::uint64_t>(spec.domain_id))));
  Motion m;
  m.x0 = std::uniform_int_distribution<int>(b.lo_x, b.hi_x)(rng);
  m.y0 = std::uniform_int_distribution<int>(b.lo_y, b.hi_y)(rng);
  std::uniform_int_distribution<int> vel(-3, 3);
  do {
    m.vx = vel(rng);
    m.vy = vel(rng);
  } while (m.vx == 0 && m.vy == 0);
  return m;
}

Clip render_clip(const DomainSpec& spec, std::uint64_t motion_seed, int T, int height, int width) {
  Clip clip = render_clip(spec, sample_motion(spec, motion_seed, height, width), T, height, width);
  clip.motion_seed = motion_seed;
  return clip;
}

Clip render_clip(const DomainSpec& spec, const Motion& motion, int T, int height, int width) {
  if (T < 2 || T > 64) throw ContractError("clip length must be in [2, 64], got " + std::to_string(T));
  const Bounds b = center_bounds(spec, height, width);
  if (motion.x0 < b.lo_x || motion.x0 > b.hi_x || motion.y0 < b.lo_y || motion.y0 > b.hi_y) {
    throw ContractError("motion starts at (" + std::to_string(motion.x0) + "," + std::to_string(motion.y0) +
                        ") where the shape would be clipped");
  }
  const int r = shape_radius(spec, height, width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  Clip clip;
  clip.domain_id = spec.domain_id;
  clip.seed = spec.seed;
  clip.frames = Tensor<float>({T, 3, height, width});
  clip.semantics = Tensor<float>({T, kLabels, height, width});
  clip.gt_flow = Tensor<float>({T - 1, 2, height, width});

  std::vector<std::array<int, 2>> centers;
  int cx = motion.x0, cy = motion.y0, vx = motion.vx, vy = motion.vy;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      reflect(cx, vx, b.lo_x, b.hi_x);
      reflect(cy, vy, b.lo_y, b.hi_y);
    }
    centers.push_back({cx, cy});
    std::vector<std::uint8_t> labels(plane, background);
    double sx = 0, sy = 0;
    std::size_t count = 0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Label l = local_label(spec, x - cx, y - cy, r);
        labels[static_cast<std::size_t>(y) * width + x] = l;
        if (l != background) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    clip.centroids.push_back({sx / count, sy / count});
    const auto rgb = paint_labels(spec, labels, height, width);
    std::copy(rgb.storage().begin(), rgb.storage().end(), clip.frames.data() + t * 3 * plane);
    float* sem = clip.semantics.data() + t * kLabels * plane;
    for (std::size_t i = 0; i < plane; ++i) sem[labels[i] * plane + i] = 1.0f;

    if (t > 0) {
      float* flow = clip.gt_flow.data() + (t - 1) * 2 * plane;
      const float dx = static_cast<float>(centers[t - 1][0] - cx), dy = static_cast<float>(centers[t - 1][1] - cy);
      for (std::size_t i = 0; i < plane; ++i) {
        if (labels[i] == background) continue;
        flow[i] = dx;
        flow[plane + i] = dy;
      }
    }
  }
  return clip;
}

Tensor<float> paint_labels(const DomainSpec& spec, const std::vector<std::uint8_t>& labels, int height, int width) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (labels.size() != plane) throw DimensionError("label map size does not match frame");
  Tensor<float> out({3, height, width});
  for (std::size_t i = 0; i < plane; ++i) {
    const Rgb& c = spec.color(static_cast<Label>(labels[i]));
    for (int ch = 0; ch < 3; ++ch) out[ch * plane + i] = c[ch];
  }
  return out;
}

Tensor<float> Clip::frame(int t) const {
  const std::size_t n = 3 * static_cast<std::size_t>(height()) * width();
  return Tensor<float>({3, height(), width()}, std::vector<float>(frames.data() + t * n, frames.data() + (t + 1) * n));
}

Tensor<float> Clip::semantic(int t) const {
  const int s = semantics.dim(1);
  const std::size_t n = s * static_cast<std::size_t>(height()) * width();
  return Tensor<float>({s, height(), width()},
                       std::vector<float>(semantics.data() + t * n, semantics.data() + (t + 1) * n));
}

Tensor<float> Clip::flow(int t) const {
  const std::size_t n = 2 * static_cast<std::size_t>(height()) * width();
  return Tensor<float>({2, height(), width()}, std::vector<float>(gt_flow.data() + t * n, gt_flow.data() + (t + 1) * n));
}

std::vector<std::uint8_t> Clip::labels(int t) const {
  const int s = semantics.dim(1);
  const std::size_t plane = static_cast<std::size_t>(height()) * width();
  const float* sem = semantics.data() + t * s * plane;
  std::vector<std::uint8_t> out(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    for (int c = 1; c < s; ++c)
      if (sem[c * plane + i] > sem[best * plane + i]) best = c;
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void persist_clip(const Clip& clip, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  const int T = clip.length(), H = clip.height(), W = clip.width();
  io::write_json(directory / "manifest.json", {{"version", kFormatVersion},
                                               {"T", T},
                                               {"H", H},
                                               {"W", W},
                                               {"S", clip.semantics.dim(1)},
                                               {"domain_id", clip.domain_id},
                                               {"seed", clip.seed},
                                               {"motion_seed", clip.motion_seed}});
  for (int t = 0; t < T; ++t) {
    io::write_png_rgb(directory / indexed("frame", t), clip.frame(t));
    io::write_png_gray(directory / indexed("sem", t), clip.labels(t), H, W);
  }
  std::string blob;
  io::append_f32_le(blob, clip.gt_flow.data(), clip.gt_flow.size());
  io::write_file(directory / "flow.bin", blob);
  io::write_json(directory / "flow.json",
                 {{"shape", clip.gt_flow.shape()}, {"dtype", "float32"}, {"byte_order", "little"}});
  io::Json cents = io::Json::array();
  for (const auto& c : clip.centroids) cents.push_back({c[0], c[1]});
  io::write_json(directory / "centroids.json", cents);
}

namespace {

// A trailing run of missing files reads as a short clip (format error); a hole
// in the middle is a missing file (I/O error naming it).
void check_sequence(const std::filesystem::path& dir, const char* stem, int T) {
  std::set<int> present;
  const std::string prefix = std::string(stem) + "_";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) != 0 || entry.path().extension() != ".png") continue;
    try {
      present.insert(std::stoi(name.substr(prefix.size())));
    } catch (const std::exception&) {
    }
  }
  const int count = static_cast<int>(present.size());
  const bool contiguous = count == 0 || (*present.begin() == 0 && *present.rbegin() == count - 1);
  if (contiguous && count != T) {
    throw FormatError("manifest T=" + std::to_string(T) + " but found " + std::to_string(count) + " " + stem +
                      " files in " + dir.string());
  }
  for (int t = 0; t < T; ++t) {
    if (!present.count(t)) throw IoError("missing file " + (dir / indexed(stem, t)).string());
  }
}

}  // namespace

Clip load_clip(const std::filesystem::path& directory) {
  const io::Json m = io::read_json(directory / "manifest.json");
  int T = 0, H = 0, W = 0, S = 0;
  Clip clip;
  try {
    if (m.at("version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported clip format version " + m.at("version").dump());
    }
    T = m.at("T").get<int>();
    H = m.at("H").get<int>();
    W = m.at("W").get<int>();
    S = m.at("S").get<int>();
    clip.domain_id = m.at("domain_id").get<int>();
    clip.seed = m.at("seed").get<std::uint64_t>();
    clip.motion_seed = m.at("motion_seed").get<std::uint64_t>();
  } catch (const io::Json::exception& e) {
    throw FormatError("bad manifest in " + directory.string() + ": " + e.what());
  }
  if (T < 2 || H < 1 || W < 1 || S < 1 || S > 255) throw FormatError("implausible manifest in " + directory.string());
  check_sequence(directory, "frame", T);
  check_sequence(directory, "sem", T);

  const std::size_t plane = static_cast<std::size_t>(H) * W;
  clip.frames = Tensor<float>({T, 3, H, W});
  clip.semantics = Tensor<float>({T, S, H, W});
  for (int t = 0; t < T; ++t) {
    const auto path = directory / indexed("frame", t);
    const auto rgb = io::read_png_rgb(path);
    if (rgb.dim(1) != H || rgb.dim(2) != W) {
      throw FormatError(path.string() + " is " + std::to_string(rgb.dim(1)) + "x" + std::to_string(rgb.dim(2)) +
                        ", manifest says " + std::to_string(H) + "x" + std::to_string(W));
    }
    std::copy(rgb.storage().begin(), rgb.storage().end(), clip.frames.data() + t * 3 * plane);
    int h = 0, w = 0;
    const auto spath = directory / indexed("sem", t);
    const auto labels = io::read_png_gray(spath, h, w);
    if (h != H || w != W) throw FormatError(spath.string() + " does not match manifest size");
    float* sem = clip.semantics.data() + t * S * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (labels[i] >= S) throw FormatError(spath.string() + " has label " + std::to_string(labels[i]));
      sem[labels[i] * plane + i] = 1.0f;
    }
  }

  const io::Json fj = io::read_json(directory / "flow.json");
  const nn::Shape expected{T - 1, 2, H, W};
  if (!fj.contains("shape") || fj["shape"].get<nn::Shape>() != expected) {
    throw FormatError("flow.json shape does not match manifest " + nn::to_string(expected));
  }
  const std::string blob = io::read_file(directory / "flow.bin");
  clip.gt_flow = Tensor<float>(expected);
  if (blob.size() != clip.gt_flow.size() * 4) {
    throw FormatError("flow.bin holds " + std::to_string(blob.size()) + " bytes, expected " +
                      std::to_string(clip.gt_flow.size() * 4));
  }
  io::decode_f32_le(blob.data(), clip.gt_flow.size(), clip.gt_flow.data());

  const io::Json cj = io::read_json(directory / "centroids.json");
  if (!cj.is_array() || static_cast<int>(cj.size()) != T) throw FormatError("centroids.json must list T points");
  for (const auto& c : cj) clip.centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  return clip;
}

}  // namespace fsv2v::data
