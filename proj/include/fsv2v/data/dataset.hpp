#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "fsv2v/data/domains.hpp"

namespace fsv2v::data {

struct Dataset {
  std::map<int, DomainSpec> specs;
  std::vector<Clip> clips;

  const DomainSpec& spec(int domain_id) const;
  std::vector<int> domain_ids() const;
};

// Clip j of domain d uses motion seed d * 100003 + j.
std::uint64_t clip_motion_seed(int domain_id, int clip_index);

Dataset generate_dataset(const std::vector<int>& domain_ids, int clips_per_domain, int T, int height, int width,
                         std::uint64_t seed);

// dataset.json plus one clip directory per clip: domain_%03d/clip_%03d.
void persist_dataset(const Dataset& dataset, const std::filesystem::path& directory);
Dataset load_dataset(const std::filesystem::path& directory);

// Consecutive ids starting at `first`.
std::vector<int> domain_range(int first, int count);

}  // namespace fsv2v::data
