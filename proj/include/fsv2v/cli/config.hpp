#pragma once

// Run configuration: one JSON document with sections model, train, data, eval
// and paths. Unknown keys are rejected; missing keys take documented defaults.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsv2v/io/binary.hpp"
#include "fsv2v/model/config.hpp"
#include "fsv2v/training/trainer.hpp"

namespace fsv2v::cli {

struct DataConfig {
  int domains = 16;          // training domains, ids 0..domains-1
  int heldout_first = 1000;  // held-out ids start here, disjoint from training
  int heldout_domains = 4;
  int clips_per_domain = 8;
  int heldout_clips = 4;
  int length = 8;  // frames per clip
  int height = 64;
  int width = 64;
};

struct EvalConfig {
  std::vector<std::string> protocols{"vs_variants"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> domain_counts{2, 4, 8, 16};
  std::vector<int> k_values{1, 2, 4};
  std::vector<int> adain_domain_counts{4, 16};
  int k = 1;
  int finetune_steps = 50;
  double finetune_lr = 1e-4;
  std::uint64_t fid_seed = 0;
  bool plot = false;
};

struct PathsConfig {
  std::string data = "data";
  std::string checkpoint = "checkpoint.ckpt";
  std::string log = "train_log.jsonl";
  std::string output = "out";
  std::string cache = "cache";  // trained checkpoints for benchmark protocols
};

struct Config {
  std::uint64_t seed = 1;
  model::ModelConfig model;
  training::TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  PathsConfig paths;

  // Canonical document with every key present.
  io::Json to_json() const;
  // FNV-1a of the canonical document, as 16 hex digits.
  std::string fingerprint() const;
  void validate() const;
};

// Applies `doc` over the defaults. Unknown keys raise ConfigError naming the
// key and the nearest valid one.
Config parse_config(const io::Json& doc);
Config load_config(const std::filesystem::path& path);

// FSV2V_SEED, when set, replaces config.seed (and the training seed).
void apply_seed_override(Config& config);

io::Json model_to_json(const model::ModelConfig& m);
model::ModelConfig model_from_json(const io::Json& doc);

// Closest candidate by edit distance.
std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates);

}  // namespace fsv2v::cli
