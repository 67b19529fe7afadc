#pragma once

// Benchmark protocols: each trains (or reuses cached) checkpoints with fixed
// seeds, evaluates them on held-out domains and emits a table plus curve data.

#include <filesystem>
#include <string>
#include <vector>

#include "fsv2v/cli/config.hpp"
#include "fsv2v/eval/heldout.hpp"

namespace fsv2v::eval {

// Metric columns shared by every protocol table.
inline const std::vector<std::string> kMetricNames{"pose_error_px", "fid", "pixel_acc", "miou", "l1"};

struct BenchmarkRow {
  std::string label;  // variant, domain count, K, ...
  double x = 0;
  std::vector<io::Json> per_seed;  // one metric object per seed
  io::Json median;                 // per metric, median over seeds
};

struct BenchmarkTable {
  std::string protocol;
  std::vector<BenchmarkRow> rows;
  io::Json to_json() const;
};

// Config of the training run behind one benchmark point: the base config with
// variant, training domain count and seed replaced and eval reset. Baselines get K_max = 1,
// and iterations per epoch stay fixed across domain counts.
cli::Config derived_config(const cli::Config& base, model::Variant variant, int domains, std::uint64_t seed);

data::Dataset training_dataset(const cli::Config& c);
data::Dataset heldout_dataset(const cli::Config& c);

// Trains `c` on `dataset`, or resumes from `checkpoint` when one with the
// same fingerprint and seed exists there. Returns the final parameters.
nn::ParamSet<float> train_or_resume(const cli::Config& c, const data::Dataset& dataset,
                                    const std::filesystem::path& checkpoint,
                                    const std::filesystem::path& log, bool verbose);

// <variant>_<n>d_<fingerprint>_s<seed>; the cache holds <stem>.ckpt and the
// training log <stem>.jsonl.
std::string cache_stem(const cli::Config& c);

// Checkpoint for a derived config, cached under cache_dir by fingerprint and
// seed.
nn::ParamSet<float> cached_checkpoint(const cli::Config& c, const std::filesystem::path& cache_dir, bool verbose);

// `checkpoint` (if non-empty) replaces training for single-checkpoint
// protocols (vs_K, finetune_delta); a missing file is an IoError.
BenchmarkTable run_benchmark(const cli::Config& base, const std::string& protocol,
                             const std::filesystem::path& cache_dir, const std::filesystem::path& checkpoint = {},
                             bool verbose = false);

// report.json gathers every table; one curves_<protocol>.csv per table and,
// when `plot`, plot_<protocol>.svg.
void write_report(const std::vector<BenchmarkTable>& tables, const std::string& fingerprint,
                  const std::filesystem::path& out_dir, bool plot);

// Reads curves_<protocol>.csv and renders plot_<protocol>.svg next to it.
void plot_curves(const std::filesystem::path& csv, const std::filesystem::path& svg);

double median(std::vector<double> v);

}  // namespace fsv2v::eval
