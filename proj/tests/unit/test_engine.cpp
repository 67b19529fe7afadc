#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fsv2v/engine/rollout.hpp"
#include "fsv2v/model/model.hpp"
#include "fsv2v/nn/grad_check.hpp"
#include "fsv2v/nn/ops.hpp"
#include "grad_cases.hpp"

namespace {

using namespace fsv2v;
using namespace fsv2v::engine;
using namespace fsv2v::model;
using nn::Graph;
using nn::Shape;
using fsv2v::test::random_semantics;
using fsv2v::test::random_tensor;
using fsv2v::test::tiny_config;
using fsv2v::test::lively_params;
using fsv2v::test::make_examples;
using fsv2v::test::make_video;
using fsv2v::test::step_loss;
using MaybeAttention = std::optional<model::AttentionResult<float>>;

TEST(Rollout, FirstFrameSkipsMatting) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 1);
  std::mt19937_64 rng(1);
  ExampleSet ex = make_examples(1, rng);
  auto s1 = random_semantics<float>(4, 8, 8, rng);

  Graph<float> g(false);
  nn::ParamBinder<float> p(g, ps);
  ExampleVars<float> ev{{g.constant(ex.images[0])}, {g.constant(ex.semantics[0])}};
  std::vector<Var<float>> sw{g.constant(Tensor<float>({4, 8, 8})), g.constant(s1)};
  std::vector<Var<float>> xw{g.constant(Tensor<float>({3, 8, 8}))};
  auto cond = condition(p, cfg, ev, example_features(p, cfg, ev), sw.back(), static_cast<MaybeAttention*>(nullptr));
  auto r = generate_step(p, cfg, ev, cond, MaybeAttention{}, sw, xw, false);
  EXPECT_FALSE(r.previous_flow.has_value());
  EXPECT_EQ(r.image.value(), r.intermediate_example.value());

  Rollout roll(cfg, ps, ex);
  EXPECT_EQ(roll.step(s1), r.image.value());
  EXPECT_FALSE(roll.trace().matted);
  roll.step(s1);
  EXPECT_TRUE(roll.trace().matted);
}

TEST(Rollout, SingleExampleWeightsAreComputedOnce) {
  for (Variant v : {Variant::full, Variant::encoder, Variant::concatstyle, Variant::adain}) {
    ModelConfig cfg = tiny_config(v);
    auto ps = lively_params(cfg, 2);
    std::mt19937_64 rng(2);
    ExampleSet ex = make_examples(1, rng);
    auto video = make_video(5, rng);
    Rollout cached(cfg, ps, ex), fresh(cfg, ps, ex, RolloutConfig{false});
    std::vector<Tensor<float>> first;
    for (const auto& s : video) {
      EXPECT_EQ(cached.step(s), fresh.step(s)) << to_string(v);
      if (first.empty()) first = cached.conditioning();
      ASSERT_EQ(cached.conditioning().size(), first.size());
      for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(cached.conditioning()[i], first[i]);
      for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(fresh.conditioning()[i], first[i]);
    }
    EXPECT_EQ(cached.conditioning_computations(), 1);
    EXPECT_EQ(fresh.conditioning_computations(), 5);
  }
}

TEST(Rollout, MultipleExamplesRecomputeAttentionEveryStep) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 3);
  std::mt19937_64 rng(3);
  Rollout roll(cfg, ps, make_examples(3, rng));
  for (const auto& s : make_video(4, rng)) roll.step(s);
  EXPECT_EQ(roll.conditioning_computations(), 4);
}

TEST(Rollout, WindowHoldsExactlyTheMarkovHistory) {
  for (int tau : {1, 2}) {
    ModelConfig cfg = tiny_config();
    cfg.tau = tau;
    auto ps = lively_params(cfg, 4);
    std::mt19937_64 rng(4);
    auto video = make_video(5, rng);
    Rollout roll(cfg, ps, make_examples(1, rng));
    std::vector<Tensor<float>> produced;
    const Tensor<float> zs({4, 8, 8}), zx({3, 8, 8});
    for (int t = 1; t <= 5; ++t) {
      produced.push_back(roll.step(video[static_cast<std::size_t>(t - 1)]));
      const auto& tr = roll.trace();
      EXPECT_EQ(tr.t, t);
      ASSERT_EQ(tr.s_window.size(), static_cast<std::size_t>(tau + 1));
      ASSERT_EQ(tr.x_window.size(), static_cast<std::size_t>(tau));
      // Oldest first: window position i holds frame t - tau + i.
      for (int i = 0; i <= tau; ++i) {
        const int j = t - tau + i;
        EXPECT_EQ(tr.s_window[static_cast<std::size_t>(i)], j >= 1 ? video[static_cast<std::size_t>(j - 1)] : zs);
      }
      for (int i = 0; i < tau; ++i) {
        const int j = t - tau + i;
        EXPECT_EQ(tr.x_window[static_cast<std::size_t>(i)], j >= 1 ? produced[static_cast<std::size_t>(j - 1)] : zx);
      }
    }
  }
}

TEST(Rollout, FramesOutsideTheWindowDoNotMatter) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 5);
  std::mt19937_64 rng(5);
  ExampleSet ex = make_examples(1, rng);
  auto video = make_video(4, rng);
  auto perturbed = video;
  perturbed[0] = random_semantics<float>(4, 8, 8, rng);  // s_1, older than t - tau for t = 4
  std::deque<Tensor<float>> xh{random_tensor<float>({3, 8, 8}, rng, 0, 1)};  // frozen x̃_3

  auto step_at_4 = [&](const std::vector<Tensor<float>>& v) {
    std::deque<Tensor<float>> sh(v.begin(), v.end());
    Graph<float> g(false);
    nn::ParamBinder<float> p(g, ps);
    ExampleVars<float> ev{{g.constant(ex.images[0])}, {g.constant(ex.semantics[0])}};
    std::vector<Var<float>> sw, xw;
    for (const auto& s : semantic_window(cfg, sh)) sw.push_back(g.constant(s));
    for (const auto& x : frame_window(cfg, xh)) xw.push_back(g.constant(x));
    auto cond = condition(p, cfg, ev, example_features(p, cfg, ev), sw.back(), static_cast<MaybeAttention*>(nullptr));
    return generate_step(p, cfg, ev, cond, MaybeAttention{}, sw, xw, true).image.value();
  };
  EXPECT_EQ(step_at_4(video), step_at_4(perturbed));
  auto recent = video;
  recent[2] = perturbed[0];  // s_3 is inside the window
  EXPECT_NE(step_at_4(video), step_at_4(recent));
}

TEST(Rollout, VideoLengthAndDeterminism) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 6);
  std::mt19937_64 rng(6);
  ExampleSet ex = make_examples(2, rng);
  for (int T : {1, 4, 8}) {
    auto video = make_video(T, rng);
    auto a = rollout_video(cfg, ps, ex, video);
    auto b = rollout_video(cfg, ps, ex, video);
    ASSERT_EQ(a.size(), static_cast<std::size_t>(T));
    EXPECT_EQ(a, b);
    if (T == 1) {
      Rollout r(cfg, ps, ex);
      EXPECT_EQ(r.step(video[0]), a[0]);
    }
    for (const auto& x : a)
      for (float v : x.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
  }
}

TEST(Rollout, ErrorsCarryTheFrameIndex) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 7);
  std::mt19937_64 rng(7);
  ExampleSet ex = make_examples(1, rng);
  auto video = make_video(4, rng);
  video[2] = Tensor<float>({4, 8, 6});
  try {
    rollout_video(cfg, ps, ex, video);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Rollout(cfg, ps, ExampleSet{}), ContractError);
  ModelConfig base = tiny_config(Variant::adain);
  auto bps = lively_params(base, 7);
  EXPECT_THROW(Rollout(base, bps, make_examples(2, rng)), ContractError);
}

TEST(Rollout, AllVariantsProduceImagesAtDefaultResolution) {
  std::mt19937_64 rng(8);
  ExampleSet ex = make_examples(1, rng, 64, 64);
  auto video = make_video(2, rng, 64, 64);
  for (Variant v : {Variant::full, Variant::encoder, Variant::concatstyle, Variant::adain}) {
    ModelConfig cfg;
    cfg.variant = v;
    auto ps = initialize_model(cfg, 8);
    for (const auto& x : rollout_video(cfg, ps, ex, video)) {
      ASSERT_EQ(x.shape(), (Shape{3, 64, 64})) << to_string(v);
      for (float val : x.values()) {
        ASSERT_GE(val, 0.0f);
        ASSERT_LE(val, 1.0f);
      }
    }
  }
}

TEST(Rollout, SingleExampleNeverTouchesAttentionParameters) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 9).cast<double>();
  std::mt19937_64 rng(9);
  auto video = make_video(2, rng);
  auto x_prev = random_tensor<float>({3, 8, 8}, rng, 0, 1);
  for (int K : {1, 2}) {
    ExampleSet ex = make_examples(K, rng);
    Graph<double> g(true);
    nn::ParamBinder<double> p(g, ps);
    g.backward(step_loss(p, cfg, ex, video, x_prev));
    double ea = 0;
    for (const auto& [name, grad] : p.gradients())
      if (name.rfind("E.A.", 0) == 0)
        for (double v : grad.values()) ea += std::abs(v);
    if (K == 1) {
      EXPECT_EQ(ea, 0.0);
    } else {
      EXPECT_GT(ea, 0.0);
    }
  }
}

TEST(Rollout, FullStepGradientCheck) {
  ModelConfig cfg = tiny_config();
  auto ps32 = lively_params(cfg, 10);
  nn::ParamSet<double> ps;
  for (const auto& [name, t] : ps32)
    if (is_generator_param(name)) ps.insert(name, t.cast<double>());
  std::mt19937_64 rng(10);
  ExampleSet ex = make_examples(2, rng);
  auto video = make_video(2, rng);
  auto x_prev = random_tensor<float>({3, 8, 8}, rng, 0, 1);
  nn::GradCheckOptions opt;
  opt.max_elements_per_param = 4;
  auto report = nn::finite_diff_grad_check(
      [&](nn::ParamBinder<double>& p) { return step_loss(p, cfg, ex, video, x_prev); }, ps, opt);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " " << report.max_rel_error << " " << report.failure;
  std::size_t reached = 0;
  for (const auto& e : report.entries) reached += e.checked > 0;
  EXPECT_EQ(reached, ps.size());
}

TEST(Finetune, ZeroStepsReturnsParametersUnchanged) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 11);
  std::mt19937_64 rng(11);
  FinetuneOptions opt;
  opt.steps = 0;
  auto out = finetune_on_examples(cfg, ps, make_examples(2, rng), opt);
  for (const auto& [name, t] : ps) EXPECT_EQ(out.at(name), t) << name;
}

TEST(Finetune, OnlyWeightGenerationAndSynthesisMove) {
  for (Variant v : {Variant::full, Variant::adain}) {
    ModelConfig cfg = tiny_config(v);
    auto ps = lively_params(cfg, 12);
    std::mt19937_64 rng(12);
    ExampleSet ex = make_examples(v == Variant::full ? 2 : 1, rng);
    FinetuneOptions opt;
    opt.steps = 3;
    opt.lr = 1e-3;
    auto out = finetune_on_examples(cfg, ps, ex, opt);
    bool moved = false;
    for (const auto& [name, t] : ps) {
      if (is_finetune_param(name)) {
        moved = moved || out.at(name) != t;
      } else {
        EXPECT_EQ(out.at(name), t) << name;
      }
    }
    EXPECT_TRUE(moved) << to_string(v);
  }
}

TEST(Finetune, FrozenPathsReceiveNoGradient) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 13).cast<double>();
  std::mt19937_64 rng(13);
  ExampleSet ex = make_examples(1, rng);
  auto video = make_video(2, rng);
  Graph<double> g(true);
  nn::ParamBinder<double> p(g, ps, is_finetune_param);
  g.backward(step_loss(p, cfg, ex, video, random_tensor<float>({3, 8, 8}, rng, 0, 1)));
  auto grads = p.gradients();
  for (const auto& [name, t] : ps) EXPECT_EQ(grads.contains(name), is_finetune_param(name)) << name;
  EXPECT_GT(nn::global_norm(grads.cast<float>()), 0.0);
}

TEST(Finetune, ReducesReconstructionError) {
  ModelConfig cfg = tiny_config();
  auto ps = lively_params(cfg, 14);
  std::mt19937_64 rng(14);
  ExampleSet ex = make_examples(1, rng);
  auto l1 = [&](const ParamSet<float>& params) {
    auto x = rollout_video(cfg, params, ex, {ex.semantics[0]})[0];
    double e = 0;
    for (std::size_t i = 0; i < x.size(); ++i) e += std::abs(x[i] - ex.images[0][i]);
    return e / static_cast<double>(x.size());
  };
  FinetuneOptions opt;
  opt.steps = 20;
  opt.lr = 1e-3;
  EXPECT_LT(l1(finetune_on_examples(cfg, ps, ex, opt)), l1(ps));
}

}  // namespace
