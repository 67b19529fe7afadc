#include "fsv2v/engine/rollout.hpp"

#include "fsv2v/model/discriminator.hpp"
#include "fsv2v/model/model.hpp"

namespace fsv2v::engine {

using namespace model;
using nn::Graph;

namespace {

void check_examples(const ModelConfig& cfg, const ExampleSet& ex) {
  if (ex.size() < 1) throw ContractError("example set is empty");
  if (ex.images.size() != ex.semantics.size()) throw ContractError("example images and semantics differ in count");
  for (int k = 0; k < ex.size(); ++k) {
    const auto& e = ex.images[static_cast<std::size_t>(k)];
    const auto& s = ex.semantics[static_cast<std::size_t>(k)];
    if (e.shape() != nn::Shape{3, cfg.height, cfg.width})
      throw DimensionError("example " + std::to_string(k) + " image has shape " + nn::to_string(e.shape()));
    if (s.shape() != nn::Shape{cfg.semantic_channels, cfg.height, cfg.width})
      throw DimensionError("example " + std::to_string(k) + " semantics has shape " + nn::to_string(s.shape()));
  }
}

ExampleVars<float> bind_examples(Graph<float>& g, const ExampleSet& ex) {
  ExampleVars<float> v;
  for (const auto& e : ex.images) v.images.push_back(g.constant(e));
  for (const auto& s : ex.semantics) v.semantics.push_back(g.constant(s));
  return v;
}

std::vector<Tensor<float>> flatten_conditioning(const Conditioning<float>& c) {
  std::vector<Tensor<float>> out;
  if (c.style) out.push_back(c.style->value());
  for (const auto& w : c.weights) {
    for (const auto* v : {&w.s_kernel, &w.s_bias, &w.gamma_kernel, &w.gamma_bias, &w.beta_kernel, &w.beta_bias})
      out.push_back(v->value());
  }
  return out;
}

Conditioning<float> restore_conditioning(Graph<float>& g, const ModelConfig& cfg,
                                         const std::vector<Tensor<float>>& flat) {
  Conditioning<float> c;
  std::size_t i = 0;
  if (cfg.variant != Variant::full) {
    c.style = g.constant(flat.at(i++));
    return c;
  }
  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights<float> w;
    for (auto* v : {&w.s_kernel, &w.s_bias, &w.gamma_kernel, &w.gamma_bias, &w.beta_kernel, &w.beta_bias})
      *v = g.constant(flat.at(i++));
    c.weights.push_back(w);
  }
  return c;
}

}  // namespace

std::vector<Tensor<float>> semantic_window(const ModelConfig& cfg, const std::deque<Tensor<float>>& history) {
  std::vector<Tensor<float>> w;
  const int have = static_cast<int>(history.size());
  for (int i = cfg.tau; i >= 0; --i) {
    if (i < have) w.push_back(history[static_cast<std::size_t>(have - 1 - i)]);
    else w.emplace_back(nn::Shape{cfg.semantic_channels, cfg.height, cfg.width});
  }
  return w;
}

std::vector<Tensor<float>> frame_window(const ModelConfig& cfg, const std::deque<Tensor<float>>& history) {
  std::vector<Tensor<float>> w;
  const int have = static_cast<int>(history.size());
  for (int i = cfg.tau - 1; i >= 0; --i) {
    if (i < have) w.push_back(history[static_cast<std::size_t>(have - 1 - i)]);
    else w.emplace_back(nn::Shape{3, cfg.height, cfg.width});
  }
  return w;
}

Rollout::Rollout(const ModelConfig& cfg, const ParamSet<float>& params, ExampleSet examples, RolloutConfig config)
    : cfg_(cfg), params_(params), examples_(std::move(examples)), config_(config) {
  cfg_.validate();
  check_examples(cfg_, examples_);
  if (cfg_.variant != Variant::full && examples_.size() != 1) {
    throw ContractError("baseline '" + to_string(cfg_.variant) + "' supports exactly one example, got K=" +
                        std::to_string(examples_.size()));
  }
}

Tensor<float> Rollout::step(const Tensor<float>& s_t) {
  if (s_t.shape() != nn::Shape{cfg_.semantic_channels, cfg_.height, cfg_.width}) {
    throw DimensionError("semantic frame has shape " + nn::to_string(s_t.shape()) + ", expected [" +
                         std::to_string(cfg_.semantic_channels) + "," + std::to_string(cfg_.height) + "," +
                         std::to_string(cfg_.width) + "]");
  }
  s_history_.push_back(s_t);
  while (static_cast<int>(s_history_.size()) > cfg_.tau + 1) s_history_.pop_front();

  Graph<float> g(false);
  nn::ParamBinder<float> p(g, params_);
  ExampleVars<float> ev = bind_examples(g, examples_);

  StepTrace trace;
  trace.t = t_ + 1;
  trace.s_window = semantic_window(cfg_, s_history_);
  trace.x_window = frame_window(cfg_, x_history_);
  std::vector<Var<float>> sw, xw;
  for (const auto& s : trace.s_window) sw.push_back(g.constant(s));
  for (const auto& x : trace.x_window) xw.push_back(g.constant(x));

  const bool cacheable = config_.cache_weights && examples_.size() == 1;
  Conditioning<float> cond;
  std::optional<AttentionResult<float>> att;
  if (cacheable && have_cache_) {
    cond = restore_conditioning(g, cfg_, conditioning_);
  } else {
    cond = condition(p, cfg_, ev, example_features(p, cfg_, ev), sw.back(), &att);
    conditioning_ = flatten_conditioning(cond);
    have_cache_ = cacheable;
    ++computations_;
  }

  const bool has_previous = !x_history_.empty();
  StepResult<float> r = generate_step(p, cfg_, ev, cond, std::move(att), sw, xw, has_previous);
  trace.matted = has_previous;
  trace.selected_example = r.selected_example;
  trace_ = std::move(trace);

  Tensor<float> x = r.image.value();
  x_history_.push_back(x);
  while (static_cast<int>(x_history_.size()) > cfg_.tau) x_history_.pop_front();
  ++t_;
  return x;
}

namespace {

template <typename E>
[[noreturn]] void rethrow_at(const E& e, std::size_t t) {
  throw E("frame " + std::to_string(t + 1) + ": " + e.what());
}

}  // namespace

std::vector<Tensor<float>> rollout_video(const ModelConfig& cfg, const ParamSet<float>& params,
                                         const ExampleSet& examples, const std::vector<Tensor<float>>& semantics,
                                         RolloutConfig config) {
  Rollout r(cfg, params, examples, config);
  std::vector<Tensor<float>> out;
  out.reserve(semantics.size());
  for (std::size_t t = 0; t < semantics.size(); ++t) {
    try {
      out.push_back(r.step(semantics[t]));
    } catch (const DimensionError& e) {
      rethrow_at(e, t);
    } catch (const NonFiniteError& e) {
      rethrow_at(e, t);
    } catch (const ContractError& e) {
      rethrow_at(e, t);
    }
  }
  return out;
}

ParamSet<float> finetune_on_examples(const ModelConfig& cfg, ParamSet<float> params, const ExampleSet& examples,
                                     const FinetuneOptions& options) {
  cfg.validate();
  check_examples(cfg, examples);
  if (options.steps < 0) throw ContractError("fine-tune steps must be >= 0");
  if (options.steps == 0) return params;
  nn::AdamOptions ao;
  ao.lr = options.lr;
  nn::Adam adam(ao);
  for (int step = 0; step < options.steps; ++step) {
    Graph<float> g(true);
    nn::ParamBinder<float> p(g, params, is_finetune_param);
    ExampleVars<float> ev = bind_examples(g, examples);
    const auto features = example_features(p, cfg, ev);
    std::optional<Var<float>> loss;
    for (int k = 0; k < examples.size(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      std::deque<Tensor<float>> sh{examples.semantics[ku]}, xh;
      std::vector<Var<float>> sw, xw;
      for (const auto& s : semantic_window(cfg, sh)) sw.push_back(g.constant(s));
      for (const auto& x : frame_window(cfg, xh)) xw.push_back(g.constant(x));
      std::optional<AttentionResult<float>> att;
      Conditioning<float> cond = condition(p, cfg, ev, features, sw.back(), &att);
      StepResult<float> r = generate_step(p, cfg, ev, cond, std::move(att), sw, xw, false);
      Var<float> target = ev.images[ku];
      Var<float> sem = ev.semantics[ku];
      const auto real = image_discriminator(p, cfg, target, sem);
      Var<float> term = nn::add(nn::l1_distance(r.image, target), nn::l1_distance(r.intermediate, target));
      for (Var<float> out : {r.image, r.intermediate}) {
        const auto fake = image_discriminator(p, cfg, out, sem);
        for (std::size_t i = 0; i < fake.features.size(); ++i) {
          Var<float> fm = nn::l1_distance(fake.features[i], nn::detach(real.features[i]));
          term = nn::add(term, nn::scale(fm, static_cast<float>(options.lambda_fm / fake.features.size())));
        }
      }
      loss = loss ? nn::add(*loss, term) : term;
    }
    g.backward(*loss);
    adam.step(params, p.gradients());
  }
  return params;
}

}  // namespace fsv2v::engine
