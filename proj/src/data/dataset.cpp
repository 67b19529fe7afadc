#include "fsv2v/data/dataset.hpp"

#include <cstdio>

#include "fsv2v/io/binary.hpp"

namespace fsv2v::data {

namespace {

std::filesystem::path clip_dir(int domain_id, int clip_index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "domain_%03d/clip_%03d", domain_id, clip_index);
  return buf;
}

}  // namespace

const DomainSpec& Dataset::spec(int domain_id) const {
  auto it = specs.find(domain_id);
  if (it == specs.end()) throw ContractError("dataset has no domain " + std::to_string(domain_id));
  return it->second;
}

std::vector<int> Dataset::domain_ids() const {
  std::vector<int> ids;
  for (const auto& [id, s] : specs) ids.push_back(id);
  return ids;
}

std::uint64_t clip_motion_seed(int domain_id, int clip_index) {
  return static_cast<std::uint64_t>(domain_id) * 100003ULL + static_cast<std::uint64_t>(clip_index);
}

std::vector<int> domain_range(int first, int count) {
  std::vector<int> ids(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ids[i] = first + i;
  return ids;
}

Dataset generate_dataset(const std::vector<int>& domain_ids, int clips_per_domain, int T, int height, int width,
                         std::uint64_t seed) {
  if (domain_ids.empty() || clips_per_domain < 1) throw ContractError("dataset needs at least one clip");
  Dataset ds;
  for (int id : domain_ids) ds.specs.emplace(id, generate_domain_spec(id, seed));
  const int n = static_cast<int>(domain_ids.size()) * clips_per_domain;
  ds.clips.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const int d = domain_ids[static_cast<std::size_t>(i / clips_per_domain)];
    ds.clips[static_cast<std::size_t>(i)] =
        render_clip(ds.specs.at(d), clip_motion_seed(d, i % clips_per_domain), T, height, width);
  }
  return ds;
}

void persist_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  io::Json clips = io::Json::array();
  std::map<int, int> next_index;
  for (const auto& clip : dataset.clips) {
    const int j = next_index[clip.domain_id]++;
    const auto rel = clip_dir(clip.domain_id, j);
    persist_clip(clip, directory / rel);
    clips.push_back(rel.string());
  }
  io::Json domains = io::Json::array();
  for (const auto& [id, s] : dataset.specs) domains.push_back(id);
  const std::uint64_t seed = dataset.specs.empty() ? 0 : dataset.specs.begin()->second.seed;
  io::write_json(directory / "dataset.json", {{"version", 1}, {"seed", seed}, {"domains", domains}, {"clips", clips}});
}

Dataset load_dataset(const std::filesystem::path& directory) {
  const io::Json doc = io::read_json(directory / "dataset.json");
  Dataset ds;
  try {
    const auto seed = doc.at("seed").get<std::uint64_t>();
    for (int id : doc.at("domains").get<std::vector<int>>()) ds.specs.emplace(id, generate_domain_spec(id, seed));
    for (const auto& rel : doc.at("clips")) ds.clips.push_back(load_clip(directory / rel.get<std::string>()));
  } catch (const io::Json::exception& e) {
    throw FormatError("bad dataset.json in " + directory.string() + ": " + e.what());
  }
  for (const auto& c : ds.clips) ds.spec(c.domain_id);
  return ds;
}

}  // namespace fsv2v::data
