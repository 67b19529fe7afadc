#include "fsv2v/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fsv2v/model/discriminator.hpp"
#include "fsv2v/model/model.hpp"
#include "fsv2v/training/losses.hpp"

namespace fsv2v::training {

using nn::Graph;
using nn::ParamBinder;
using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("training config: " + m); };
  if (!(lr > 0)) fail("lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (epochs < 0) fail("epochs must be >= 0");
  if (iterations_per_epoch < 0) fail("iterations_per_epoch must be >= 0");
  if (t_start < 1 || t_cap < t_start) fail("need 1 <= t_start <= t_cap");
  if (t_double_every < 1) fail("t_double_every must be >= 1");
  if (k_max < 1) fail("k_max must be >= 1");
  if (lambda_adv < 0 || lambda_fm < 0 || lambda_flow < 0 || lambda_warp < 0) fail("loss weights must be >= 0");
}

int scheduled_length(const TrainConfig& cfg, int epoch) {
  long long t = cfg.t_start;
  for (int e = cfg.t_double_every; e <= epoch && t < cfg.t_cap; e += cfg.t_double_every) t *= 2;
  return static_cast<int>(std::min<long long>(t, cfg.t_cap));
}

Batch sample_training_batch(const data::Dataset& dataset, int T, int k_max, std::mt19937_64& rng) {
  if (dataset.clips.empty()) throw ContractError("cannot sample a batch from an empty dataset");
  Batch b;
  b.clip = std::uniform_int_distribution<int>(0, static_cast<int>(dataset.clips.size()) - 1)(rng);
  const data::Clip& clip = dataset.clips[static_cast<std::size_t>(b.clip)];
  const int len = clip.length();
  b.length = std::min(T, len);
  b.start = std::uniform_int_distribution<int>(0, len - b.length)(rng);
  const int K = std::uniform_int_distribution<int>(1, k_max)(rng);

  std::vector<int> outside, all(static_cast<std::size_t>(len));
  std::iota(all.begin(), all.end(), 0);
  for (int f = 0; f < len; ++f)
    if (f < b.start || f >= b.start + b.length) outside.push_back(f);
  std::vector<int>& pool = static_cast<int>(outside.size()) >= K ? outside : all;
  // Partial Fisher-Yates with our own draws keeps the sequence portable.
  for (int i = 0; i < std::min<int>(K, static_cast<int>(pool.size())); ++i) {
    const int j = std::uniform_int_distribution<int>(i, static_cast<int>(pool.size()) - 1)(rng);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    b.example_frames.push_back(pool[static_cast<std::size_t>(i)]);
  }
  // Frames may repeat only when the clip is shorter than K.
  while (static_cast<int>(b.example_frames.size()) < K)
    b.example_frames.push_back(b.example_frames[b.example_frames.size() % pool.size()]);
  for (int f : b.example_frames) {
    b.examples.images.push_back(clip.frame(f));
    b.examples.semantics.push_back(clip.semantic(f));
  }
  return b;
}

Tensor<float> example_flow_target(const data::Clip& clip, int target_frame, int example_frame) {
  const int H = clip.height(), W = clip.width();
  Tensor<float> f({2, H, W});
  const auto labels = clip.labels(target_frame);
  const auto& ct = clip.centroids[static_cast<std::size_t>(target_frame)];
  const auto& ce = clip.centroids[static_cast<std::size_t>(example_frame)];
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (labels[static_cast<std::size_t>(y) * W + x] == data::background) continue;
      f.at(0, y, x) = static_cast<float>(ce[0] - ct[0]);
      f.at(1, y, x) = static_cast<float>(ce[1] - ct[1]);
    }
  return f;
}

bool LossReport::finite() const {
  for (double v : {g_adv, d_real, d_fake, fm, flow, warp, g_total, d_total})
    if (!std::isfinite(v)) return false;
  return true;
}

io::Json LossReport::to_json() const {
  return {{"G_adv", g_adv}, {"D_real", d_real}, {"D_fake", d_fake}, {"FM", fm},
          {"flow", flow},   {"warp", warp},     {"G_total", g_total}, {"D_total", d_total}};
}

LossReport& LossReport::operator+=(const LossReport& o) {
  g_adv += o.g_adv;
  d_real += o.d_real;
  d_fake += o.d_fake;
  fm += o.fm;
  flow += o.flow;
  warp += o.warp;
  g_total += o.g_total;
  d_total += o.d_total;
  return *this;
}

LossReport LossReport::scaled(double s) const {
  LossReport r = *this;
  for (double* v : {&r.g_adv, &r.d_real, &r.d_fake, &r.fm, &r.flow, &r.warp, &r.g_total, &r.d_total}) *v *= s;
  return r;
}

namespace {

nn::AdamOptions adam_options(const TrainConfig& c) {
  nn::AdamOptions o;
  o.lr = c.lr;
  o.beta1 = c.beta1;
  o.beta2 = c.beta2;
  return o;
}

// Running sum of scalar terms with a count, averaged at the end.
struct Term {
  std::optional<Var<float>> sum;
  int count = 0;
  void add(Var<float> v) {
    sum = sum ? nn::add(*sum, v) : v;
    ++count;
  }
  std::optional<Var<float>> mean() const {
    if (!sum) return std::nullopt;
    return nn::scale(*sum, 1.0f / static_cast<float>(count));
  }
  double value() const { return sum ? static_cast<double>(sum->value()[0]) / count : 0.0; }
};

void check_finite(const LossReport& r, const nn::ParamSet<float>& grads, const char* who, std::int64_t iteration) {
  const double norm = nn::global_norm(grads);
  if (!r.finite() || !std::isfinite(norm)) {
    throw NonFiniteError(std::string(who) + " update at iteration " + std::to_string(iteration) +
                         " produced a non-finite value (losses " + r.to_json().dump() + ", gradient norm " +
                         std::to_string(norm) + ")");
  }
}

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig config, const data::Dataset& dataset, ParamSet<float> params)
    : model_(std::move(model)),
      config_(config),
      dataset_(dataset),
      params_(std::move(params)),
      adam_g_(adam_options(config)),
      adam_d_(adam_options(config)),
      rng_(config.seed) {
  model_.validate();
  config_.validate();
  if (dataset_.clips.empty()) throw ContractError("training needs a non-empty dataset");
  const auto& c = dataset_.clips.front();
  if (c.height() != model_.height || c.width() != model_.width) {
    throw ContractError("dataset is " + std::to_string(c.height()) + "x" + std::to_string(c.width()) +
                        ", model expects " + std::to_string(model_.height) + "x" + std::to_string(model_.width));
  }
  if (config_.k_max > 1 && model_.variant != model::Variant::full) {
    throw ContractError("baseline '" + model::to_string(model_.variant) + "' trains with k_max = 1 only");
  }
}

int Trainer::iterations_per_epoch() const {
  return config_.iterations_per_epoch > 0 ? config_.iterations_per_epoch : static_cast<int>(dataset_.clips.size());
}

LossReport Trainer::generator_step(const Batch& b, std::vector<Tensor<float>>& generated) {
  const data::Clip& clip = dataset_.clips[static_cast<std::size_t>(b.clip)];
  const ModelConfig& cfg = model_;
  Graph<float> g(true);
  ParamBinder<float> p(g, params_, model::is_generator_param);
  engine::ExampleVars<float> ev;
  for (int k = 0; k < b.examples.size(); ++k) {
    ev.images.push_back(g.constant(b.examples.images[static_cast<std::size_t>(k)]));
    ev.semantics.push_back(g.constant(b.examples.semantics[static_cast<std::size_t>(k)]));
  }
  const auto features = engine::example_features(p, cfg, ev);
  const Var<float> zero_s = g.constant(Tensor<float>({cfg.semantic_channels, cfg.height, cfg.width}));
  const Var<float> zero_x = g.constant(Tensor<float>({3, cfg.height, cfg.width}));

  std::vector<Var<float>> sem, real, fake;
  for (int t = 0; t < b.length; ++t) {
    sem.push_back(g.constant(clip.semantic(b.start + t)));
    real.push_back(g.constant(clip.frame(b.start + t)));
  }
  Term adv, fm, flow, warp;
  std::optional<model::Conditioning<float>> single;  // K = 1 weights do not depend on s_t
  for (int t = 0; t < b.length; ++t) {
    std::vector<Var<float>> sw, xw;
    for (int i = t - cfg.tau; i <= t; ++i) sw.push_back(i < 0 ? zero_s : sem[static_cast<std::size_t>(i)]);
    for (int i = t - cfg.tau; i < t; ++i) xw.push_back(i < 0 ? zero_x : fake[static_cast<std::size_t>(i)]);
    std::optional<model::AttentionResult<float>> att;
    model::Conditioning<float> cond;
    if (b.examples.size() == 1 && single) {
      cond = *single;
    } else {
      cond = engine::condition(p, cfg, ev, features, sw.back(), &att);
      if (b.examples.size() == 1) single = cond;
    }
    auto r = engine::generate_step(p, cfg, ev, cond, std::move(att), sw, xw, t > 0);
    fake.push_back(r.image);

    const auto d_fake = model::image_discriminator(p, cfg, r.image, sem[static_cast<std::size_t>(t)]);
    const auto d_real = model::image_discriminator(p, cfg, real[static_cast<std::size_t>(t)],
                                                   sem[static_cast<std::size_t>(t)]);
    adv.add(lsgan_generator_loss(d_fake.logits));
    fm.add(feature_matching_loss(r.image, real[static_cast<std::size_t>(t)], d_fake.features, d_real.features));
    // The intermediate image gets direct supervision too, so H learns
    // appearance even where matting would copy from the past.
    fm.add(nn::l1_distance(r.intermediate_example, real[static_cast<std::size_t>(t)]));
    if (r.previous_flow) {
      flow.add(flow_loss(r.previous_flow->flow, g.constant(clip.flow(b.start + t - 1))));
      warp.add(warp_loss(real[static_cast<std::size_t>(t) - 1], r.previous_flow->flow, real[static_cast<std::size_t>(t)]));
    }
    if (r.example_flow) {
      const int e = b.example_frames[static_cast<std::size_t>(r.selected_example)];
      flow.add(flow_loss(r.example_flow->flow, g.constant(example_flow_target(clip, b.start + t, e))));
    }
  }
  if (config_.temporal_discriminator && b.length >= model::kTemporalFrames) {
    for (int t = model::kTemporalFrames - 1; t < b.length; ++t) {
      std::vector<Var<float>> win(fake.begin() + t - 2, fake.begin() + t + 1);
      adv.add(lsgan_generator_loss(model::temporal_discriminator(p, cfg, win).logits));
    }
  }

  Var<float> total = nn::scale(*adv.mean(), static_cast<float>(config_.lambda_adv));
  total = nn::add(total, nn::scale(*fm.mean(), static_cast<float>(config_.lambda_fm)));
  if (auto f = flow.mean()) total = nn::add(total, nn::scale(*f, static_cast<float>(config_.lambda_flow)));
  if (auto w = warp.mean()) total = nn::add(total, nn::scale(*w, static_cast<float>(config_.lambda_warp)));

  LossReport rep;
  rep.g_adv = adv.value();
  rep.fm = fm.value();
  rep.flow = flow.value();
  rep.warp = warp.value();
  rep.g_total = total.value()[0];
  g.backward(total);
  const auto grads = p.gradients();
  check_finite(rep, grads, "generator", iteration_);
  adam_g_.step(params_, grads);
  generated.clear();
  for (const auto& f : fake) generated.push_back(f.value());
  return rep;
}

LossReport Trainer::discriminator_step(const Batch& b, const std::vector<Tensor<float>>& generated) {
  const data::Clip& clip = dataset_.clips[static_cast<std::size_t>(b.clip)];
  Graph<float> g(true);
  ParamBinder<float> p(g, params_, model::is_discriminator_param);
  Term real_t, fake_t;
  std::vector<Var<float>> real, fake;
  for (int t = 0; t < b.length; ++t) {
    Var<float> s = g.constant(clip.semantic(b.start + t));
    real.push_back(g.constant(clip.frame(b.start + t)));
    fake.push_back(g.constant(generated[static_cast<std::size_t>(t)]));
    real_t.add(nn::mean_squared_to(model::image_discriminator(p, model_, real.back(), s).logits, 1.0f));
    fake_t.add(nn::mean_squared_to(model::image_discriminator(p, model_, fake.back(), s).logits, 0.0f));
  }
  if (config_.temporal_discriminator && b.length >= model::kTemporalFrames) {
    for (int t = model::kTemporalFrames - 1; t < b.length; ++t) {
      std::vector<Var<float>> rw(real.begin() + t - 2, real.begin() + t + 1), fw(fake.begin() + t - 2, fake.begin() + t + 1);
      real_t.add(nn::mean_squared_to(model::temporal_discriminator(p, model_, rw).logits, 1.0f));
      fake_t.add(nn::mean_squared_to(model::temporal_discriminator(p, model_, fw).logits, 0.0f));
    }
  }
  Var<float> total = nn::scale(nn::add(*real_t.mean(), *fake_t.mean()), 0.5f);
  LossReport rep;
  rep.d_real = real_t.value();
  rep.d_fake = fake_t.value();
  rep.d_total = total.value()[0];
  g.backward(total);
  const auto grads = p.gradients();
  check_finite(rep, grads, "discriminator", iteration_);
  adam_d_.step(params_, grads);
  return rep;
}

LossReport Trainer::step() {
  const Batch b = sample_training_batch(dataset_, current_length(), config_.k_max, rng_);
  std::vector<Tensor<float>> generated;
  LossReport rep = generator_step(b, generated);
  if (config_.lambda_adv > 0) rep += discriminator_step(b, generated);
  ++iteration_;
  return rep;
}

LossReport Trainer::run_epoch() {
  LossReport sum;
  const int n = iterations_per_epoch();
  for (int i = 0; i < n; ++i) sum += step();
  ++epoch_;
  return sum.scaled(1.0 / n);
}

io::Checkpoint Trainer::state() const {
  io::Checkpoint c;
  c.params = params_;
  auto add = [&](const std::string& prefix, const ParamSet<float>& set) {
    for (const auto& [name, t] : set) c.optimizer.insert(prefix + name, t);
  };
  add("g.m.", adam_g_.first_moments());
  add("g.v.", adam_g_.second_moments());
  add("d.m.", adam_d_.first_moments());
  add("d.v.", adam_d_.second_moments());
  std::ostringstream rng;
  rng << rng_;
  c.meta["trainer"] = {{"epoch", epoch_},
                       {"iteration", iteration_},
                       {"adam_g_steps", adam_g_.steps()},
                       {"adam_d_steps", adam_d_.steps()},
                       {"rng", rng.str()}};
  c.meta["epoch"] = epoch_;
  return c;
}

void Trainer::restore(const io::Checkpoint& c) {
  for (const auto& [name, t] : params_) {
    if (!c.params.contains(name)) throw ContractError("checkpoint lacks parameter '" + name + "'");
    if (c.params.at(name).shape() != t.shape()) {
      throw DimensionError("checkpoint parameter '" + name + "' has shape " + nn::to_string(c.params.at(name).shape()) +
                           ", model expects " + nn::to_string(t.shape()));
    }
  }
  params_ = c.params;
  if (!c.meta.contains("trainer")) {
    epoch_ = 0;
    iteration_ = 0;
    return;
  }
  const auto& tr = c.meta.at("trainer");
  ParamSet<float> gm, gv, dm, dv;
  for (const auto& [name, t] : c.optimizer) {
    const std::string rest = name.substr(4);
    if (name.rfind("g.m.", 0) == 0) gm.insert(rest, t);
    else if (name.rfind("g.v.", 0) == 0) gv.insert(rest, t);
    else if (name.rfind("d.m.", 0) == 0) dm.insert(rest, t);
    else if (name.rfind("d.v.", 0) == 0) dv.insert(rest, t);
  }
  adam_g_.restore(tr.at("adam_g_steps").get<std::int64_t>(), std::move(gm), std::move(gv));
  adam_d_.restore(tr.at("adam_d_steps").get<std::int64_t>(), std::move(dm), std::move(dv));
  std::istringstream rng(tr.at("rng").get<std::string>());
  rng >> rng_;
  epoch_ = tr.at("epoch");
  iteration_ = tr.at("iteration");
}

void train(Trainer& trainer, const TrainOutputs& out, const io::Json& meta, bool verbose) {
  auto save = [&] {
    io::Checkpoint c = trainer.state();
    for (const auto& [k, v] : meta.items()) c.meta[k] = v;
    io::save_checkpoint(out.checkpoint, c);
  };
  if (out.log.has_parent_path()) std::filesystem::create_directories(out.log.parent_path());
  std::ofstream log(out.log, std::ios::app);
  if (!log) throw IoError("cannot write training log " + out.log.string());
  while (trainer.epoch() < trainer.config().epochs) {
    const int T = trainer.current_length();
    const auto t0 = std::chrono::steady_clock::now();
    LossReport rep;
    try {
      rep = trainer.run_epoch();
    } catch (const NonFiniteError& e) {
      save();
      throw NonFiniteError(std::string(e.what()) + "; last good state saved to " + out.checkpoint.string());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::Json rec = {{"epoch", trainer.epoch()}, {"T", T}, {"losses", rep.to_json()}, {"wall_time", wall}};
    log << rec.dump() << "\n" << std::flush;
    if (verbose) std::cerr << rec.dump() << "\n";
    save();
  }
}

}  // namespace fsv2v::training
