#pragma once

// Adversarial training of the sequential generator with progressive sequence
// length and K-example sampling.

#include <filesystem>
#include <random>

#include "fsv2v/data/dataset.hpp"
#include "fsv2v/engine/rollout.hpp"
#include "fsv2v/io/checkpoint.hpp"

namespace fsv2v::training {

using engine::ExampleSet;
using model::ModelConfig;
using nn::ParamSet;

struct TrainConfig {
  double lr = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 30;
  int iterations_per_epoch = 0;  // 0: one iteration per clip
  int t_start = 1;
  int t_double_every = 5;
  int t_cap = 8;
  int k_max = 4;
  double lambda_adv = 1.0;  // 0 turns training into plain regression
  double lambda_fm = 10.0;
  double lambda_flow = 10.0;
  double lambda_warp = 10.0;
  bool temporal_discriminator = true;
  std::uint64_t seed = 1;

  void validate() const;
};

// Sequence length for a 0-based epoch: t_start doubled every t_double_every
// epochs, capped at t_cap.
int scheduled_length(const TrainConfig& cfg, int epoch);

struct Batch {
  int clip = 0;    // index into Dataset::clips
  int start = 0;   // first target frame
  int length = 1;  // T
  std::vector<int> example_frames;
  ExampleSet examples;
};

// Uniform clip and window; K ~ U{1..k_max} example frames of the same clip,
// drawn from outside the window when enough frames remain there.
Batch sample_training_batch(const data::Dataset& dataset, int T, int k_max, std::mt19937_64& rng);

// Backward flow from a target frame into an example frame of the same clip:
// c_e - c_t on the target's shape pixels, zero elsewhere.
nn::Tensor<float> example_flow_target(const data::Clip& clip, int target_frame, int example_frame);

struct LossReport {
  double g_adv = 0, d_real = 0, d_fake = 0, fm = 0, flow = 0, warp = 0;
  double g_total = 0, d_total = 0;

  bool finite() const;
  io::Json to_json() const;
  LossReport& operator+=(const LossReport& o);
  LossReport scaled(double s) const;
};

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig config, const data::Dataset& dataset, ParamSet<float> params);

  // One generator and one discriminator update on a freshly sampled batch at
  // the current epoch's T. A non-finite loss or gradient throws NonFiniteError
  // before the offending update is applied.
  LossReport step();

  // Runs iterations_per_epoch steps and advances the epoch. Returns the mean.
  LossReport run_epoch();

  int epoch() const { return epoch_; }  // completed epochs
  std::int64_t iteration() const { return iteration_; }
  int current_length() const { return scheduled_length(config_, epoch_); }
  int iterations_per_epoch() const;
  const ParamSet<float>& params() const { return params_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& config() const { return config_; }

  // Parameters, optimizer moments, rng and counters.
  io::Checkpoint state() const;
  void restore(const io::Checkpoint& ckpt);

 private:
  LossReport generator_step(const Batch& batch, std::vector<nn::Tensor<float>>& generated);
  LossReport discriminator_step(const Batch& batch, const std::vector<nn::Tensor<float>>& generated);

  ModelConfig model_;
  TrainConfig config_;
  const data::Dataset& dataset_;
  ParamSet<float> params_;
  nn::Adam adam_g_, adam_d_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::int64_t iteration_ = 0;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;  // one JSON record per epoch
};

// Trains until config.epochs, appending to the log and saving the checkpoint
// after every epoch. `meta` is merged into the checkpoint manifest. On a
// non-finite loss the last good state is saved and NonFiniteError rethrown.
void train(Trainer& trainer, const TrainOutputs& outputs, const io::Json& meta = io::Json::object(),
           bool verbose = false);

}  // namespace fsv2v::training
