#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fsv2v/model/baselines.hpp"
#include "fsv2v/model/flow.hpp"
#include "fsv2v/model/model.hpp"
#include "fsv2v/model/spade.hpp"
#include "fsv2v/nn/grad_check.hpp"
#include "fsv2v/nn/ops.hpp"
#include "grad_cases.hpp"

namespace {

using namespace fsv2v;
using namespace fsv2v::model;
using namespace fsv2v::nn;
using fsv2v::test::random_semantics;
using fsv2v::test::random_tensor;
using fsv2v::test::tiny_config;

ParamSet<double> tiny_params(const ModelConfig& cfg, std::uint64_t seed = 7) {
  return initialize_model(cfg, seed).cast<double>();
}

// Keeps only specs whose name starts with one of `prefixes`.
std::vector<ParamSpec> only(std::vector<ParamSpec> specs, std::initializer_list<const char*> prefixes) {
  std::erase_if(specs, [&](const ParamSpec& s) {
    return std::none_of(prefixes.begin(), prefixes.end(), [&](const char* p) { return s.name.rfind(p, 0) == 0; });
  });
  return specs;
}

void zero_biases(ParamSet<double>& ps) {
  for (auto& [name, t] : ps)
    if (name.size() > 5 && name.substr(name.size() - 5) == ".bias") t = Tensor<double>(t.shape(), 0.0);
}

Tensor<double> center_tap_identity(int out, int in, int k) {
  Tensor<double> w({out, in, k, k});
  for (int c = 0; c < std::min(out, in); ++c) w[((static_cast<std::size_t>(c) * in + c) * k + k / 2) * k + k / 2] = 1.0;
  return w;
}

// ---------------------------------------------------------------- weight_gen

TEST(WeightGen, FeatureResolutionsHalvePerLevel) {
  ModelConfig cfg;  // 64x64, L = 4
  std::vector<ParamSpec> specs;
  declare_weight_gen(specs, cfg);
  ParamSet<double> ps = initialize(only(specs, {"E.F."}), 3).cast<double>();
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::mt19937_64 rng(1);
  auto f = extract_example_features(p, cfg, g.constant(random_tensor({3, 64, 64}, rng, 0, 1)),
                                    g.constant(random_semantics(4, 64, 64, rng)));
  ASSERT_EQ(f.size(), 4u);
  const int sides[] = {32, 16, 8, 4};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(f[static_cast<std::size_t>(l)].shape(), (Shape{cfg.feature_channels[static_cast<std::size_t>(l)],
                                                              sides[l], sides[l]}));
  }
}

TEST(WeightGen, ZeroExampleGivesZeroFeatures) {
  ModelConfig cfg = tiny_config();
  std::vector<ParamSpec> specs;
  declare_weight_gen(specs, cfg);
  ParamSet<double> ps = initialize(only(specs, {"E.F."}), 3).cast<double>();
  zero_biases(ps);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto f = extract_example_features(p, cfg, g.constant(Tensor<double>({3, 8, 8})), g.constant(Tensor<double>({4, 8, 8})));
  for (const auto& q : f)
    for (double v : q.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(WeightGen, IdentityFirstLevelReproducesStridedInput) {
  ModelConfig cfg = tiny_config();
  cfg.layers = 1;
  cfg.main_channels = {4};
  cfg.feature_channels = {7};  // 3 image + 4 semantic channels
  ParamSet<double> ps;
  ps.insert("E.F.level0.weight", center_tap_identity(7, 7, 3));
  ps.insert("E.F.level0.bias", Tensor<double>({7}));
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::mt19937_64 rng(5);
  auto img = random_tensor({3, 8, 8}, rng, 0, 1);
  auto sem = random_semantics(4, 8, 8, rng);
  auto q = extract_example_features(p, cfg, g.constant(img), g.constant(sem))[0].value();
  ASSERT_EQ(q.shape(), (Shape{7, 4, 4}));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(q.at(c, y, x), img.at(c, 2 * y, 2 * x));
      for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(q.at(3 + c, y, x), sem.at(c, 2 * y, 2 * x));
    }
}

TEST(WeightGen, AttentionColumnsAreStochastic) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(11);
  for (int K : {2, 3, 4}) {
    Graph<double> g(false);
    ParamBinder<double> p(g, ps);
    std::vector<Var<double>> ex;
    for (int k = 0; k < K; ++k) ex.push_back(g.constant(random_semantics(4, 8, 8, rng)));
    auto att = compute_attention(p, cfg, ex, g.constant(random_semantics(4, 8, 8, rng)));
    const int N = att.positions;
    ASSERT_EQ(att.alpha.shape(), (Shape{K * N, N}));
    for (int j = 0; j < N; ++j) {
      double s = 0;
      for (int i = 0; i < K * N; ++i) s += att.alpha.value()[static_cast<std::size_t>(i) * N + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(WeightGen, IdenticalExamplesShareAttentionEvenly) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(12);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto s = g.constant(random_semantics(4, 8, 8, rng));
  auto att = compute_attention(p, cfg, {s, s}, g.constant(random_semantics(4, 8, 8, rng)));
  const std::size_t block = static_cast<std::size_t>(att.positions) * att.positions;
  for (std::size_t i = 0; i < block; ++i) EXPECT_DOUBLE_EQ(att.alpha.value()[i], att.alpha.value()[block + i]);
}

TEST(WeightGen, ConstructedKeysConcentrateAttention) {
  ModelConfig cfg = tiny_config();
  cfg.attention_res = 8;  // keys at full resolution, so one-hot pixels survive
  cfg.attention_channels = 4;
  const double lambda = std::sqrt(12.0);
  ParamSet<double> ps;
  ps.insert("E.A.conv1.weight", center_tap_identity(4, 4, 3));
  ps.insert("E.A.conv1.bias", Tensor<double>({4}));
  Tensor<double> w2 = center_tap_identity(4, 4, 3);
  for (auto& v : w2.values()) v *= lambda;
  ps.insert("E.A.conv2.weight", w2);
  ps.insert("E.A.conv2.bias", Tensor<double>({4}));
  const int py = 3, px = 5, pos = py * 8 + px;
  Tensor<double> s1({4, 8, 8}), s2({4, 8, 8}), st({4, 8, 8});
  s1.at(0, py, px) = 1.0;
  st.at(0, py, px) = 1.0;
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto att = compute_attention(p, cfg, {g.constant(s1), g.constant(s2)}, g.constant(st));
  const int N = att.positions;
  // Oracle: column `pos` sees one logit of lambda^2 and 2N-1 zeros.
  const double e = std::exp(lambda * lambda);
  const double expected = e / (e + 2 * N - 1);
  EXPECT_GT(expected, 0.99);
  EXPECT_NEAR(att.alpha.value()[static_cast<std::size_t>(pos) * N + pos], expected, 1e-12);
}

LayerFeatures<double> random_features(Graph<double>& g, std::mt19937_64& rng, const std::vector<Shape>& shapes) {
  LayerFeatures<double> f;
  for (const auto& s : shapes) f.push_back(g.constant(random_tensor(s, rng)));
  return f;
}

// Random column-stochastic [K*N, N] alpha.
Tensor<double> random_alpha(int K, int N, std::mt19937_64& rng) {
  Tensor<double> a({K * N, N});
  std::uniform_real_distribution<double> d(0.01, 1.0);
  for (int j = 0; j < N; ++j) {
    double s = 0;
    for (int i = 0; i < K * N; ++i) s += (a[static_cast<std::size_t>(i) * N + j] = d(rng));
    for (int i = 0; i < K * N; ++i) a[static_cast<std::size_t>(i) * N + j] /= s;
  }
  return a;
}

AttentionResult<double> fake_attention(Graph<double>& g, const Tensor<double>& alpha, int K, int N) {
  AttentionResult<double> r;
  r.examples = K;
  r.positions = N;
  r.alpha = g.constant(alpha);
  return r;
}

TEST(WeightGen, SingleExampleBypassesAggregation) {
  ModelConfig cfg = tiny_config();
  Graph<double> g(false);
  std::mt19937_64 rng(3);
  auto f = random_features(g, rng, {{4, 4, 4}, {5, 2, 2}});
  auto q = aggregate_features<double>(cfg, {f}, nullptr);
  for (std::size_t l = 0; l < f.size(); ++l) EXPECT_EQ(q[l].value(), f[l].value());
}

TEST(WeightGen, MultipleExamplesWithoutAttentionIsAContractError) {
  ModelConfig cfg = tiny_config();
  Graph<double> g(false);
  std::mt19937_64 rng(3);
  auto f = random_features(g, rng, {{4, 4, 4}});
  EXPECT_THROW(aggregate_features<double>(cfg, {f, f}, nullptr), ContractError);
}

TEST(WeightGen, AggregationIsPermutationInvariant) {
  ModelConfig cfg = tiny_config();
  const int K = 3, N = 16;
  Graph<double> g(false);
  std::mt19937_64 rng(4);
  std::vector<LayerFeatures<double>> fs;
  for (int k = 0; k < K; ++k) fs.push_back(random_features(g, rng, {{4, 4, 4}, {5, 2, 2}}));
  Tensor<double> alpha = random_alpha(K, N, rng);
  const int perm[K] = {2, 0, 1};
  Tensor<double> alpha_p(alpha.shape());
  std::vector<LayerFeatures<double>> fs_p;
  for (int k = 0; k < K; ++k) {
    fs_p.push_back(fs[static_cast<std::size_t>(perm[k])]);
    std::copy_n(alpha.values().begin() + static_cast<std::ptrdiff_t>(perm[k]) * N * N, N * N,
                alpha_p.values().begin() + static_cast<std::ptrdiff_t>(k) * N * N);
  }
  auto a = fake_attention(g, alpha, K, N), ap = fake_attention(g, alpha_p, K, N);
  auto q = aggregate_features(cfg, fs, &a), qp = aggregate_features(cfg, fs_p, &ap);
  for (std::size_t l = 0; l < q.size(); ++l)
    for (std::size_t i = 0; i < q[l].size(); ++i) EXPECT_NEAR(q[l].value()[i], qp[l].value()[i], 1e-12);
}

TEST(WeightGen, OneHotAttentionSelectsThatExample) {
  ModelConfig cfg = tiny_config();
  const int K = 2, N = 16;
  Graph<double> g(false);
  std::mt19937_64 rng(6);
  // Features already at the key resolution, so the resizes are exact.
  std::vector<LayerFeatures<double>> fs{random_features(g, rng, {{4, 4, 4}}), random_features(g, rng, {{4, 4, 4}})};
  Tensor<double> alpha({K * N, N});
  for (int j = 0; j < N; ++j) alpha[static_cast<std::size_t>(N + j) * N + j] = 1.0;
  auto a = fake_attention(g, alpha, K, N);
  auto q = aggregate_features(cfg, fs, &a);
  EXPECT_EQ(q[0].value(), fs[1][0].value());
}

TEST(WeightGen, GeneratedSizesMatchDefaultConfig) {
  ModelConfig cfg;
  // (C_S*C_in*9 + C_S) + 2*(C_H*C_S*9 + C_H), C_in = 4 then 32+4.
  EXPECT_EQ(generated_size(cfg, 0), 32 * 4 * 9 + 32 + 2 * (128 * 32 * 9 + 128));
  EXPECT_EQ(generated_size(cfg, 1), 32 * 36 * 9 + 32 + 2 * (64 * 32 * 9 + 64));
  EXPECT_EQ(generated_size(cfg, 2), 32 * 36 * 9 + 32 + 2 * (32 * 32 * 9 + 32));
  EXPECT_EQ(generated_size(cfg, 3), 32 * 36 * 9 + 32 + 2 * (16 * 32 * 9 + 16));
  EXPECT_EQ(generated_size(cfg, 0), 75168);
}

TEST(WeightGen, ZeroFeaturesAndBiasesGiveZeroWeights) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  zero_biases(ps);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  LayerFeatures<double> q{g.constant(Tensor<double>({4, 4, 4})), g.constant(Tensor<double>({5, 2, 2}))};
  auto w = generate_spade_weights(p, cfg, q);
  ASSERT_EQ(w.size(), 2u);
  for (const auto& lw : w)
    for (const auto* v : {&lw.s_kernel, &lw.s_bias, &lw.gamma_kernel, &lw.gamma_bias, &lw.beta_kernel, &lw.beta_bias})
      for (double x : v->value().values()) EXPECT_EQ(x, 0.0);
}

TEST(WeightGen, DifferentExamplesGiveDifferentGamma) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(8);
  auto sem = random_semantics(4, 8, 8, rng);
  Tensor<double> gam[2];
  for (int i = 0; i < 2; ++i) {
    Graph<double> g(false);
    ParamBinder<double> p(g, ps);
    auto f = extract_example_features(p, cfg, g.constant(random_tensor({3, 8, 8}, rng, 0, 1)), g.constant(sem));
    gam[i] = generate_spade_weights(p, cfg, f)[0].gamma_kernel.value();
  }
  double diff = 0;
  for (std::size_t i = 0; i < gam[0].size(); ++i) diff += std::abs(gam[0][i] - gam[1][i]);
  EXPECT_GT(diff, 0.0);
}

TEST(WeightGen, GradientsThroughAttentionAndGeneration) {
  auto report = fsv2v::test::check_attention_aggregation(0);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " " << report.max_rel_error << " " << report.failure;
  // Every E_A parameter is reached when K = 2.
  EXPECT_TRUE(std::any_of(report.entries.begin(), report.entries.end(),
                          [](const GradCheckEntry& e) { return e.name.rfind("E.A.", 0) == 0; }));
}

// ---------------------------------------------------------------- spade_synthesis

LayerWeights<double> constant_layer(Graph<double>& g, int cs, int cin, int ch, int k, double s_bias, double gamma_bias,
                                    double beta_bias, std::mt19937_64* rng = nullptr) {
  LayerWeights<double> w;
  auto tensor = [&](Shape s, double fill) { return rng ? random_tensor(s, *rng) : Tensor<double>(s, fill); };
  w.s_kernel = g.constant(tensor({cs, cin, k, k}, 0.0));
  w.s_bias = g.constant(Tensor<double>({cs}, s_bias));
  w.gamma_kernel = g.constant(Tensor<double>({ch, cs, k, k}, 0.0));
  w.gamma_bias = g.constant(Tensor<double>({ch}, gamma_bias));
  w.beta_kernel = g.constant(Tensor<double>({ch, cs, k, k}, 0.0));
  w.beta_bias = g.constant(Tensor<double>({ch}, beta_bias));
  return w;
}

TEST(Spade, ZeroModulationAnnihilatesFeatures) {
  Graph<double> g(false);
  std::mt19937_64 rng(1);
  auto p_hat = g.constant(random_tensor({5, 4, 4}, rng));
  auto s = g.constant(random_semantics(4, 8, 8, rng));
  auto r = dynamic_spade_layer<double>(p_hat, std::nullopt, s, constant_layer(g, 3, 4, 5, 3, 0.0, 0.0, 0.0, &rng));
  for (double v : r.features.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Spade, UnitGammaZeroBetaIsIdentity) {
  Graph<double> g(false);
  std::mt19937_64 rng(2);
  auto p_hat = g.constant(random_tensor({5, 4, 4}, rng));
  auto s = g.constant(random_semantics(4, 8, 8, rng));
  auto r = dynamic_spade_layer<double>(p_hat, std::nullopt, s, constant_layer(g, 3, 4, 5, 3, 0.3, 1.0, 0.0, &rng));
  EXPECT_EQ(r.features.value(), p_hat.value());
}

TEST(Spade, FirstSharedLayerSeesResizedSemantics) {
  Graph<double> g(false);
  std::mt19937_64 rng(3);
  auto s = g.constant(random_semantics(4, 8, 8, rng));
  LayerWeights<double> w = constant_layer(g, 4, 4, 5, 1, 0.0, 1.0, 0.0);
  w.s_kernel = g.constant(center_tap_identity(4, 4, 1));
  auto r = dynamic_spade_layer<double>(g.constant(random_tensor({5, 4, 4}, rng)), std::nullopt, s, w);
  // Box average of non-negative one-hots, so the leaky unit is transparent.
  auto expected = Tensor<double>({4, 4, 4});
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        double a = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) a += s.value().at(c, 2 * y + dy, 2 * x + dx);
        expected.at(c, y, x) = a / 4;
      }
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(r.p_s.value()[i], expected[i], 1e-15);
}

TEST(Spade, UniformSemanticsWithPointwiseKernelsGiveConstantModulation) {
  Graph<double> g(false);
  std::mt19937_64 rng(4);
  Tensor<double> s({4, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) s.at(2, y, x) = 1.0;
  LayerWeights<double> w;
  w.s_kernel = g.constant(random_tensor({3, 4, 1, 1}, rng));
  w.s_bias = g.constant(random_tensor({3}, rng));
  w.gamma_kernel = g.constant(random_tensor({5, 3, 1, 1}, rng));
  w.gamma_bias = g.constant(random_tensor({5}, rng));
  w.beta_kernel = g.constant(random_tensor({5, 3, 1, 1}, rng));
  w.beta_bias = g.constant(random_tensor({5}, rng));
  auto r = dynamic_spade_layer<double>(g.constant(random_tensor({5, 4, 4}, rng)), std::nullopt, g.constant(s), w);
  for (const auto* m : {&r.gamma, &r.beta})
    for (int c = 0; c < 5; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(m->value().at(c, y, x), m->value().at(c, 0, 0));
}

std::vector<Var<double>> zero_windows(Graph<double>& g, const ModelConfig& cfg, const Tensor<double>& s_t,
                                      std::vector<Var<double>>& xw) {
  std::vector<Var<double>> sw;
  for (int i = 0; i < cfg.tau; ++i) sw.push_back(g.constant(Tensor<double>({cfg.semantic_channels, cfg.height, cfg.width})));
  sw.push_back(g.constant(s_t));
  for (int i = 0; i < cfg.tau; ++i) xw.push_back(g.constant(Tensor<double>({3, cfg.height, cfg.width})));
  return sw;
}

GeneratedWeights<double> static_weights(Graph<double>& g, const ModelConfig& cfg, std::uint64_t seed) {
  GeneratedWeights<double> w;
  for (int l = 0; l < cfg.layers; ++l) {
    auto flat = static_spade_layout(cfg, l, seed);
    Tensor<double> t({static_cast<int>(flat.size())});
    for (std::size_t i = 0; i < flat.size(); ++i) t[i] = flat[i];
    w.push_back(unpack_layer_weights(cfg, l, g.constant(t)));
  }
  return w;
}

TEST(Spade, DefaultConfigOutputIsAnImageInRange) {
  ModelConfig cfg;
  std::vector<ParamSpec> specs;
  declare_synthesis(specs, cfg);
  ParamSet<double> ps = initialize(specs, 5).cast<double>();
  std::mt19937_64 rng(5);
  auto st = random_semantics(4, 64, 64, rng);
  Tensor<double> out[2];
  for (auto& o : out) {
    Graph<double> g(false);
    ParamBinder<double> p(g, ps);
    std::vector<Var<double>> xw;
    auto sw = zero_windows(g, cfg, st, xw);
    Conditioning<double> c;
    c.weights = static_weights(g, cfg, 5);
    o = synthesize_intermediate(p, cfg, sw, xw, c).value();
  }
  ASSERT_EQ(out[0].shape(), (Shape{3, 64, 64}));
  for (double v : out[0].values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(out[0], out[1]);
}

TEST(Spade, WrongWindowLengthIsAContractError) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  Conditioning<double> c;
  c.weights = static_weights(g, cfg, 1);
  std::vector<Var<double>> sw{g.constant(Tensor<double>({4, 8, 8}))}, xw;
  EXPECT_THROW(synthesize_intermediate(p, cfg, sw, xw, c), ContractError);
}

TEST(Spade, IdentityModulationMatchesUnmodulatedForward) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(6);
  auto st = random_semantics(4, 8, 8, rng);
  auto x_prev = random_tensor({3, 8, 8}, rng, 0, 1);
  auto s_prev = random_semantics(4, 8, 8, rng);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::vector<Var<double>> sw{g.constant(s_prev), g.constant(st)}, xw{g.constant(x_prev)};
  Conditioning<double> c;
  for (int l = 0; l < cfg.layers; ++l) {
    const int ch = cfg.main_channels[static_cast<std::size_t>(l)];
    c.weights.push_back(constant_layer(g, cfg.spade_channels, cfg.spade_in_channels(l), ch, 3, 0.0, 1.0, 0.0));
  }
  auto out = synthesize_intermediate(p, cfg, sw, xw, c).value();

  // Test-side forward without any modulation.
  auto cv = [&](const std::string& n, Var<double> x) { return conv2d(x, p(n + ".weight"), p(n + ".bias")); };
  Var<double> x = cv("H.main.stem", concat<double>({p("H.main.const"), resize(xw[0], 2, 2), resize(sw[0], 2, 2),
                                                     resize(sw[1], 2, 2)}));
  for (int l = 0; l < cfg.layers; ++l) {
    x = normalize_features(x, NormMode::instance);
    x = cv("H.main.up" + std::to_string(l), upsample_nearest(leaky_relu(x), 2));
  }
  auto y = cv("H.main.head", concat<double>({leaky_relu(x), sw[1]})).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(out[i], 0.5 * std::tanh(y[i]) + 0.5, 1e-12);
}

TEST(Spade, GradientsReachStaticAndGeneratedWeights) {
  auto report = fsv2v::test::check_dynamic_spade(0);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " " << report.max_rel_error << " " << report.failure;
}

// ---------------------------------------------------------------- flow_matting

TEST(Flow, ZeroHeadsGiveZeroFlowAndHalfOcclusion) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(1);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::vector<Var<double>> sw{g.constant(random_semantics(4, 8, 8, rng)), g.constant(random_semantics(4, 8, 8, rng))};
  std::vector<Var<double>> xw{g.constant(random_tensor({3, 8, 8}, rng, 0, 1))};
  for (FlowTarget t : {FlowTarget::previous, FlowTarget::example}) {
    auto out = t == FlowTarget::previous
                   ? predict_flow_occlusion(p, cfg, sw, xw, t)
                   : predict_flow_occlusion(p, cfg, sw, xw, t, std::optional(xw[0]), std::optional(sw[0]));
    for (double v : out.flow.value().values()) EXPECT_EQ(v, 0.0);
    for (double v : out.occlusion.value().values()) EXPECT_EQ(v, 0.5);
  }
}

TEST(Flow, HeadRangesHoldForLargeWeights) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(2);
  for (const char* n : {"W.prev.flow.weight", "M.prev.occ.weight"}) ps.at(n) = random_tensor(ps.at(n).shape(), rng, -50, 50);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::vector<Var<double>> sw{g.constant(random_semantics(4, 8, 8, rng)), g.constant(random_semantics(4, 8, 8, rng))};
  std::vector<Var<double>> xw{g.constant(random_tensor({3, 8, 8}, rng, 0, 1))};
  auto out = predict_flow_occlusion(p, cfg, sw, xw, FlowTarget::previous);
  EXPECT_EQ(out.flow.shape(), (Shape{2, 8, 8}));
  EXPECT_EQ(out.occlusion.shape(), (Shape{1, 8, 8}));
  for (double v : out.flow.value().values()) EXPECT_LE(std::abs(v), cfg.max_displacement);
  for (double v : out.occlusion.value().values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Flow, ExampleTargetRequiresTheExample) {
  ModelConfig cfg = tiny_config();
  ParamSet<double> ps = tiny_params(cfg);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  std::vector<Var<double>> sw{g.constant(Tensor<double>({4, 8, 8})), g.constant(Tensor<double>({4, 8, 8}))};
  std::vector<Var<double>> xw{g.constant(Tensor<double>({3, 8, 8}))};
  EXPECT_THROW(predict_flow_occlusion(p, cfg, sw, xw, FlowTarget::example), ContractError);
}

struct MattingCase {
  Tensor<double> h, prev, flow;
};

MattingCase matting_case(std::uint64_t seed, bool zero_flow) {
  std::mt19937_64 rng(seed);
  MattingCase c{random_tensor({3, 6, 7}, rng, 0, 1), random_tensor({3, 6, 7}, rng, 0, 1), Tensor<double>({2, 6, 7})};
  if (!zero_flow) c.flow = random_tensor({2, 6, 7}, rng, -2, 2);
  return c;
}

TEST(Matting, MaskSelectsBranches) {
  auto c = matting_case(1, true);
  Graph<double> g(false);
  auto h = g.constant(c.h), prev = g.constant(c.prev), flow = g.constant(c.flow);
  for (auto compose : {composite_matting<double>, composite_example<double>}) {
    EXPECT_EQ(compose(h, prev, flow, g.constant(Tensor<double>({1, 6, 7}, 1.0))).value(), c.h);
    EXPECT_EQ(compose(h, prev, flow, g.constant(Tensor<double>({1, 6, 7}, 0.0))).value(), c.prev);
    auto half = compose(h, prev, flow, g.constant(Tensor<double>({1, 6, 7}, 0.5))).value();
    for (std::size_t i = 0; i < half.size(); ++i) EXPECT_NEAR(half[i], 0.5 * (c.h[i] + c.prev[i]), 1e-15);
  }
}

TEST(Matting, OutputIsAPerPixelConvexCombination) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = matting_case(seed, false);
    std::mt19937_64 rng(seed + 100);
    Graph<double> g(false);
    auto flow = g.constant(c.flow);
    auto warped = bilinear_warp(g.constant(c.prev), flow).value();
    auto out = composite_matting(g.constant(c.h), g.constant(c.prev), flow,
                                 g.constant(random_tensor({1, 6, 7}, rng, 0, 1)))
                   .value();
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_GE(out[i], std::min(c.h[i], warped[i]) - 1e-15);
      EXPECT_LE(out[i], std::max(c.h[i], warped[i]) + 1e-15);
    }
  }
}

TEST(Matting, GradientsFlowThroughBothBranchesAndMask) {
  auto report = fsv2v::test::check_warp_matting(0);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " " << report.max_rel_error;
}

AttentionResult<double> mass_attention(Graph<double>& g, const std::vector<double>& mass, int N) {
  const int K = static_cast<int>(mass.size());
  Tensor<double> a({K * N, N});
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) a[(static_cast<std::size_t>(k) * N + i) * N + j] = mass[static_cast<std::size_t>(k)] / N;
  return fake_attention(g, a, K, N);
}

TEST(Matting, ExampleWithLargestAttentionMassIsSelected) {
  Graph<double> g(false);
  EXPECT_EQ(select_example<double>(nullptr), 0);
  auto a = mass_attention(g, {0.9, 0.1}, 4);
  EXPECT_EQ(select_example(&a), 0);
  auto b = mass_attention(g, {0.1, 0.9}, 4);
  EXPECT_EQ(select_example(&b), 1);
  auto c = mass_attention(g, {0.2, 0.1, 0.7}, 4);
  EXPECT_EQ(select_example(&c), 2);
  auto d = mass_attention(g, {0.7, 0.2, 0.1}, 4);
  EXPECT_EQ(select_example(&d), 0);
}

// ---------------------------------------------------------------- baselines

TEST(Baselines, StyleCodeShapeAndDeterminism) {
  ModelConfig cfg;
  cfg.variant = Variant::adain;
  std::vector<ParamSpec> specs;
  declare_baseline(specs, cfg);
  ParamSet<double> ps = initialize(only(specs, {"E.style_ada"}), 2).cast<double>();
  std::mt19937_64 rng(3);
  auto img = random_tensor({3, 64, 64}, rng, 0, 1);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto a = encode_style(p, cfg, g.constant(img)).value();
  auto b = encode_style(p, cfg, g.constant(img)).value();
  EXPECT_EQ(a.shape(), Shape{64});
  EXPECT_EQ(a, b);
  zero_biases(ps);
  Graph<double> g2(false);
  ParamBinder<double> p2(g2, ps);
  for (double v : encode_style(p2, cfg, g2.constant(Tensor<double>({3, 64, 64}))).value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Baselines, FullModelHasNoStyleEncoder) {
  EXPECT_THROW(style_prefix(Variant::full), ContractError);
  EXPECT_THROW(parse_variant("stylegan"), ConfigError);
  for (Variant v : {Variant::full, Variant::encoder, Variant::concatstyle, Variant::adain})
    EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(Baselines, NeutralAdainIsInstanceNorm) {
  ModelConfig cfg = tiny_config(Variant::adain);
  ParamSet<double> ps = tiny_params(cfg);
  ps.at("H.adain.layer0.fc2.weight") = Tensor<double>(ps.at("H.adain.layer0.fc2.weight").shape());
  ps.at("H.adain.layer0.fc2.bias") = Tensor<double>(ps.at("H.adain.layer0.fc2.bias").shape());
  std::mt19937_64 rng(4);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto f = g.constant(random_tensor({6, 4, 4}, rng));
  auto out = adain_modulate(p, cfg, 0, f, g.constant(random_tensor({5}, rng))).value();
  EXPECT_EQ(out, normalize_features(f, NormMode::instance).value());
}

TEST(Baselines, AdainIsAPerChannelAffineOfTheNormalizedInput) {
  ModelConfig cfg = tiny_config(Variant::adain);
  ParamSet<double> ps = tiny_params(cfg);
  std::mt19937_64 rng(5);
  Graph<double> g(false);
  ParamBinder<double> p(g, ps);
  auto f = g.constant(random_tensor({6, 4, 4}, rng));
  auto n = normalize_features(f, NormMode::instance).value();
  auto out = adain_modulate(p, cfg, 0, f, g.constant(random_tensor({5}, rng))).value();
  for (int c = 0; c < 6; ++c) {
    // Two pixels fix a and b; every other pixel must agree.
    const double a = (out.at(c, 0, 1) - out.at(c, 0, 0)) / (n.at(c, 0, 1) - n.at(c, 0, 0));
    const double b = out.at(c, 0, 0) - a * n.at(c, 0, 0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) EXPECT_NEAR(out.at(c, y, x), a * n.at(c, y, x) + b, 1e-10);
  }
}

// AdaIN as a constrained case of generated SPADE weights: 1x1 kernels with
// one group per channel on spatially uniform semantics.
TEST(Baselines, AdainIsSubsumedByPointwiseDepthwiseSpade) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dc(1, 8), dh(1, 9), ds(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = dc(rng), H = dh(rng), W = dh(rng), S = ds(rng);
    Graph<double> g(false);
    auto f = g.constant(random_tensor({C, H, W}, rng, -3, 3));
    auto a = random_tensor({C}, rng, -2, 2), b = random_tensor({C}, rng, -2, 2);
    auto expected = adain_affine(f, g.constant(a), g.constant(b)).value();

    Tensor<double> s({S, H, W});
    const int label = std::uniform_int_distribution<int>(0, S - 1)(rng);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) s.at(label, y, x) = 1.0;
    // θ_S: C_S = C, 1x1, positive bias so p_S is a spatially constant v > 0.
    LayerWeights<double> w;
    auto sk = random_tensor({C, S, 1, 1}, rng, 0, 1);
    auto sb = random_tensor({C}, rng, 0.5, 1.5);
    std::vector<double> v(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) v[static_cast<std::size_t>(c)] = sk[static_cast<std::size_t>(c) * S + label] + sb[static_cast<std::size_t>(c)];
    // θ_γ, θ_β: depthwise 1x1 with k_c·v_c + bias_c equal to a_c and b_c.
    auto gb = random_tensor({C}, rng), bb = random_tensor({C}, rng);
    Tensor<double> gk({C, 1, 1, 1}), bk({C, 1, 1, 1});
    for (int c = 0; c < C; ++c) {
      const auto u = static_cast<std::size_t>(c);
      gk[u] = (a[u] - gb[u]) / v[u];
      bk[u] = (b[u] - bb[u]) / v[u];
    }
    w.s_kernel = g.constant(sk);
    w.s_bias = g.constant(sb);
    w.gamma_kernel = g.constant(gk);
    w.gamma_bias = g.constant(gb);
    w.beta_kernel = g.constant(bk);
    w.beta_bias = g.constant(bb);
    w.groups = C;
    auto r = dynamic_spade_layer<double>(normalize_features(f, NormMode::instance), std::nullopt, g.constant(s), w);
    for (std::size_t i = 0; i < expected.size(); ++i)
      ASSERT_NEAR(r.features.value()[i], expected[i], 1e-6) << "trial " << trial;
  }
}

}  // namespace
