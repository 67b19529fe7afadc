#pragma once

// Finite-difference cases shared by the unit tests and the acceptance run:
// every autodiff primitive plus the composite blocks of the generator.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsv2v/engine/rollout.hpp"
#include "fsv2v/model/flow.hpp"
#include "fsv2v/model/model.hpp"
#include "fsv2v/model/spade.hpp"
#include "fsv2v/nn/grad_check.hpp"
#include "fsv2v/nn/ops.hpp"
#include "test_support.hpp"

namespace fsv2v::test {

using nn::GradCheckOptions;
using nn::GradCheckReport;
using nn::ParamBinder;
using nn::ParamSet;
using nn::Shape;
using nn::Var;

// Random projection of every output to a scalar.
inline Var<double> project(nn::Graph<double>& g, const std::vector<Var<double>>& outs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::optional<Var<double>> acc;
  for (const auto& o : outs) {
    Var<double> term = nn::sum(nn::mul(o, g.constant(random_tensor(o.shape(), rng))));
    acc = acc ? nn::add(*acc, term) : term;
  }
  return *acc;
}

struct PrimitiveCase {
  const char* name;
  std::vector<std::pair<std::string, Shape>> inputs;
  std::function<Var<double>(ParamBinder<double>&)> forward;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using namespace nn;
  using P = ParamBinder<double>;
  return {
      {"conv2d", {{"x", {2, 5, 4}}, {"k", {3, 2, 3, 3}}, {"b", {3}}}, [](P& p) { return conv2d(p("x"), p("k"), p("b")); }},
      {"conv2d_strided_grouped", {{"x", {4, 6, 5}}, {"k", {2, 2, 3, 3}}, {"b", {2}}},
       [](P& p) { return conv2d(p("x"), p("k"), p("b"), 2, 2); }},
      {"fully_connected", {{"x", {5}}, {"w", {3, 5}}, {"b", {3}}},
       [](P& p) { return fully_connected(p("x"), p("w"), p("b")); }},
      {"matmul", {{"a", {3, 4}}, {"b", {4, 2}}}, [](P& p) { return matmul(p("a"), p("b")); }},
      {"matmul_transposed", {{"a", {4, 3}}, {"b", {2, 4}}}, [](P& p) { return matmul(p("a"), p("b"), true, true); }},
      {"bilinear_warp", {{"img", {2, 5, 6}}, {"flow", {2, 5, 6}}},
       [](P& p) { return bilinear_warp(p("img"), scale(p("flow"), 1.7)); }},
      {"softmax_rank1", {{"x", {6}}}, [](P& p) { return softmax(p("x"), 0); }},
      {"softmax_axis0", {{"x", {4, 3}}}, [](P& p) { return softmax(p("x"), 0); }},
      {"softmax_axis1", {{"x", {4, 3}}}, [](P& p) { return softmax(p("x"), 1); }},
      {"normalize_instance", {{"x", {3, 4, 4}}}, [](P& p) { return normalize_features(p("x"), NormMode::instance); }},
      {"normalize_batch", {{"x", {2, 3, 3, 3}}}, [](P& p) { return normalize_features(p("x"), NormMode::batch); }},
      {"leaky_relu", {{"x", {3, 4}}}, [](P& p) { return leaky_relu(p("x")); }},
      {"tanh", {{"x", {7}}}, [](P& p) { return tanh(p("x")); }},
      {"sigmoid", {{"x", {7}}}, [](P& p) { return sigmoid(p("x")); }},
      {"add", {{"a", {2, 3}}, {"b", {2, 3}}}, [](P& p) { return add(p("a"), p("b")); }},
      {"sub", {{"a", {2, 3}}, {"b", {2, 3}}}, [](P& p) { return sub(p("a"), p("b")); }},
      {"mul", {{"a", {2, 3}}, {"b", {2, 3}}}, [](P& p) { return mul(p("a"), p("b")); }},
      {"add_scalar", {{"x", {5}}}, [](P& p) { return add_scalar(p("x"), 0.3); }},
      {"scale", {{"x", {5}}}, [](P& p) { return scale(p("x"), -2.5); }},
      {"affine_channels", {{"x", {3, 2, 4}}, {"s", {3}}, {"b", {3}}},
       [](P& p) { return affine_channels(p("x"), p("s"), p("b")); }},
      {"matte", {{"base", {3, 4, 4}}, {"over", {3, 4, 4}}, {"m", {1, 4, 4}}},
       [](P& p) { return matte(p("base"), p("over"), sigmoid(p("m"))); }},
      {"concat", {{"a", {1, 3, 3}}, {"b", {2, 3, 3}}}, [](P& p) { return concat<double>({p("a"), p("b")}); }},
      {"reshape", {{"x", {2, 6}}}, [](P& p) { return reshape(p("x"), {3, 4}); }},
      {"slice", {{"x", {4, 5}}}, [](P& p) { return slice(p("x"), 3, {2, 6}); }},
      {"resize_area_down", {{"x", {2, 8, 8}}}, [](P& p) { return resize(p("x"), 4, 2); }},
      {"resize_bilinear_up", {{"x", {2, 3, 4}}}, [](P& p) { return resize(p("x"), 7, 5); }},
      {"upsample_nearest", {{"x", {2, 3, 2}}}, [](P& p) { return upsample_nearest(p("x"), 2); }},
      {"adaptive_avg_pool", {{"x", {2, 5, 7}}}, [](P& p) { return adaptive_avg_pool(p("x"), 2, 2); }},
      {"global_avg_pool", {{"x", {3, 4, 5}}}, [](P& p) { return global_avg_pool(p("x")); }},
      {"broadcast_spatial", {{"v", {3}}}, [](P& p) { return broadcast_spatial(p("v"), 2, 3); }},
      {"sum", {{"x", {3, 3}}}, [](P& p) { return sum(p("x")); }},
      {"mean", {{"x", {3, 3}}}, [](P& p) { return mean(p("x")); }},
      {"l1_distance", {{"a", {2, 4}}, {"b", {2, 4}}}, [](P& p) { return l1_distance(p("a"), p("b")); }},
      {"mean_squared_to", {{"x", {6}}}, [](P& p) { return mean_squared_to(p("x"), 1.0); }},
  };
}

inline GradCheckReport check_primitive(const PrimitiveCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed + 100);
  ParamSet<double> params;
  for (const auto& [name, shape] : c.inputs) params.insert(name, random_tensor(shape, rng));
  return nn::finite_diff_grad_check(
      [&](ParamBinder<double>& p) {
        auto y = c.forward(p);
        return project(p.graph(), {y}, seed * 977 + y.size());
      },
      params);
}

// E_F features of two examples, attention over their semantics, aggregation
// and the generated weights of every layer.
inline GradCheckReport check_attention_aggregation(std::uint64_t seed, int max_elements = 12) {
  model::ModelConfig cfg = tiny_config();
  ParamSet<double> ps;
  for (auto& [name, t] : model::initialize_model(cfg, seed + 7).cast<double>())
    if (name.rfind("E.", 0) == 0) ps.insert(name, t);
  std::mt19937_64 rng(seed + 9);
  std::vector<nn::Tensor<double>> imgs, sems;
  for (int k = 0; k < 2; ++k) {
    imgs.push_back(random_tensor({3, 8, 8}, rng, 0, 1));
    sems.push_back(random_semantics(4, 8, 8, rng));
  }
  auto st = random_semantics(4, 8, 8, rng);
  auto loss = [&](ParamBinder<double>& p) {
    nn::Graph<double>& g = p.graph();
    std::vector<model::LayerFeatures<double>> fs;
    std::vector<Var<double>> sv;
    for (std::size_t k = 0; k < 2; ++k) {
      sv.push_back(g.constant(sems[k]));
      fs.push_back(model::extract_example_features(p, cfg, g.constant(imgs[k]), sv.back()));
    }
    auto att = model::compute_attention(p, cfg, sv, g.constant(st));
    auto w = model::generate_spade_weights(p, cfg, model::aggregate_features(cfg, fs, &att));
    std::vector<Var<double>> outs;
    for (const auto& lw : w)
      outs.insert(outs.end(), {lw.s_kernel, lw.s_bias, lw.gamma_kernel, lw.gamma_bias, lw.beta_kernel, lw.beta_bias});
    return project(g, outs, seed + 21);
  };
  GradCheckOptions opt;
  opt.max_elements_per_param = max_elements;
  opt.seed = seed;
  return nn::finite_diff_grad_check(loss, ps, opt);
}

// Synthesis network driven by per-layer weights that are themselves
// parameters, i.e. the gradient path into the weight generator.
inline GradCheckReport check_dynamic_spade(std::uint64_t seed, int max_elements = 16) {
  model::ModelConfig cfg = tiny_config();
  ParamSet<double> ps;
  for (auto& [name, t] : model::initialize_model(cfg, seed + 7).cast<double>())
    if (name.rfind("H.", 0) == 0) ps.insert(name, t);
  for (int l = 0; l < cfg.layers; ++l) {
    auto flat = model::static_spade_layout(cfg, l, seed + 3);
    nn::Tensor<double> t({static_cast<int>(flat.size())});
    for (std::size_t i = 0; i < flat.size(); ++i) t[i] = flat[i];
    ps.insert("G.layer" + std::to_string(l), t);
  }
  std::mt19937_64 rng(seed + 7);
  auto st = random_semantics(4, 8, 8, rng), sp = random_semantics(4, 8, 8, rng);
  auto xp = random_tensor({3, 8, 8}, rng, 0, 1);
  auto loss = [&](ParamBinder<double>& p) {
    nn::Graph<double>& g = p.graph();
    model::Conditioning<double> c;
    for (int l = 0; l < cfg.layers; ++l)
      c.weights.push_back(model::unpack_layer_weights(cfg, l, p("G.layer" + std::to_string(l))));
    auto out = model::synthesize_intermediate(p, cfg, {g.constant(sp), g.constant(st)}, {g.constant(xp)}, c);
    return project(g, {out}, seed + 3);
  };
  GradCheckOptions opt;
  opt.max_elements_per_param = max_elements;
  opt.seed = seed;
  return nn::finite_diff_grad_check(loss, ps, opt);
}

// Warp of the previous frame composited with the hallucinated one.
inline GradCheckReport check_warp_matting(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 9);
  ParamSet<double> ps;
  ps.insert("h", random_tensor({3, 6, 7}, rng, 0, 1));
  ps.insert("prev", random_tensor({3, 6, 7}, rng, 0, 1));
  ps.insert("flow", random_tensor({2, 6, 7}, rng, -2, 2));
  ps.insert("m", random_tensor({1, 6, 7}, rng, 0.05, 0.95));
  auto loss = [&](ParamBinder<double>& p) {
    return project(p.graph(), {model::composite_matting(p("h"), p("prev"), p("flow"), p("m"))}, seed + 4);
  };
  return nn::finite_diff_grad_check(loss, ps);
}

inline engine::ExampleSet make_examples(int K, std::mt19937_64& rng, int h = 8, int w = 8) {
  engine::ExampleSet ex;
  for (int k = 0; k < K; ++k) {
    ex.images.push_back(random_tensor<float>({3, h, w}, rng, 0, 1));
    ex.semantics.push_back(random_semantics<float>(4, h, w, rng));
  }
  return ex;
}

inline std::vector<nn::Tensor<float>> make_video(int T, std::mt19937_64& rng, int h = 8, int w = 8) {
  std::vector<nn::Tensor<float>> v;
  for (int t = 0; t < T; ++t) v.push_back(random_semantics<float>(4, h, w, rng));
  return v;
}

// Non-zero flow heads so that warping and matting actually do something.
inline ParamSet<float> lively_params(const model::ModelConfig& cfg, std::uint64_t seed) {
  auto ps = model::initialize_model(cfg, seed);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : ps) {
    if (name.find(".flow.") != std::string::npos || name.find(".occ.") != std::string::npos)
      t = random_tensor<float>(t.shape(), rng, -0.3, 0.3);
  }
  return ps;
}

// Loss through one matted step with K examples.
inline Var<double> step_loss(ParamBinder<double>& p, const model::ModelConfig& cfg, const engine::ExampleSet& ex,
                             const std::vector<nn::Tensor<float>>& s, const nn::Tensor<float>& x_prev) {
  nn::Graph<double>& g = p.graph();
  engine::ExampleVars<double> ev;
  for (std::size_t k = 0; k < static_cast<std::size_t>(ex.size()); ++k) {
    ev.images.push_back(g.constant(ex.images[k].cast<double>()));
    ev.semantics.push_back(g.constant(ex.semantics[k].cast<double>()));
  }
  std::vector<Var<double>> sw{g.constant(s[0].cast<double>()), g.constant(s[1].cast<double>())};
  std::vector<Var<double>> xw{g.constant(x_prev.cast<double>())};
  std::optional<model::AttentionResult<double>> att;
  auto cond = engine::condition(p, cfg, ev, engine::example_features(p, cfg, ev), sw.back(), &att);
  auto r = engine::generate_step(p, cfg, ev, cond, std::move(att), sw, xw, true);
  std::mt19937_64 rng(99);
  return nn::sum(nn::mul(r.image, g.constant(random_tensor(r.image.shape(), rng))));
}

// One full generator step (8x8, two layers, K = 2) over every generator
// parameter.
inline GradCheckReport check_rollout_step(std::uint64_t seed, int max_elements = 4) {
  model::ModelConfig cfg = tiny_config();
  ParamSet<double> ps;
  for (const auto& [name, t] : lively_params(cfg, seed + 10))
    if (model::is_generator_param(name)) ps.insert(name, t.cast<double>());
  std::mt19937_64 rng(seed + 10);
  auto ex = make_examples(2, rng);
  auto video = make_video(2, rng);
  auto x_prev = random_tensor<float>({3, 8, 8}, rng, 0, 1);
  GradCheckOptions opt;
  opt.max_elements_per_param = max_elements;
  opt.seed = seed;
  return nn::finite_diff_grad_check(
      [&](ParamBinder<double>& p) { return step_loss(p, cfg, ex, video, x_prev); }, ps, opt);
}

}  // namespace fsv2v::test
