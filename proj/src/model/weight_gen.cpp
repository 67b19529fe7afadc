#include "fsv2v/model/weight_gen.hpp"

#include <cmath>
#include <random>

namespace fsv2v::model {

using namespace nn;

namespace {

std::string level_name(const char* prefix, int l) { return std::string(prefix) + std::to_string(l); }

struct LayerLayout {
  Shape s_kernel, s_bias, gamma_kernel, gamma_bias, beta_kernel, beta_bias;
};

LayerLayout layout(const ModelConfig& cfg, int l) {
  const int k = cfg.generated_kernel, cs = cfg.spade_channels, ch = cfg.main_channels[static_cast<std::size_t>(l)];
  return {{cs, cfg.spade_in_channels(l), k, k}, {cs}, {ch, cs, k, k}, {ch}, {ch, cs, k, k}, {ch}};
}

}  // namespace

int generated_size(const ModelConfig& cfg, int layer) {
  const auto lay = layout(cfg, layer);
  std::size_t n = 0;
  for (const auto* s : {&lay.s_kernel, &lay.s_bias, &lay.gamma_kernel, &lay.gamma_bias, &lay.beta_kernel, &lay.beta_bias})
    n += element_count(*s);
  return static_cast<int>(n);
}

template <typename T>
std::vector<T> attention_mass(const AttentionResult<T>& att) {
  std::vector<T> mass(static_cast<std::size_t>(att.examples), T(0));
  const auto& a = att.alpha.value();
  const std::size_t block = static_cast<std::size_t>(att.positions) * att.positions;
  for (int k = 0; k < att.examples; ++k)
    for (std::size_t i = 0; i < block; ++i) mass[static_cast<std::size_t>(k)] += a[k * block + i];
  return mass;
}

template <typename T>
int select_example(const AttentionResult<T>* att) {
  if (!att) return 0;
  const auto mass = attention_mass(*att);
  return static_cast<int>(std::max_element(mass.begin(), mass.end()) - mass.begin());
}

template <typename T>
LayerFeatures<T> extract_example_features(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> image, Var<T> semantics) {
  if (image.shape() != Shape{3, cfg.height, cfg.width}) {
    throw DimensionError("example image must be [3," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) +
                         "], got " + nn::to_string(image.shape()));
  }
  Var<T> q = cfg.example_semantics ? concat<T>({image, semantics}) : image;
  LayerFeatures<T> out;
  for (int l = 0; l < cfg.layers; ++l) {
    q = leaky_relu(conv(p, level_name("E.F.level", l), q, 2));
    out.push_back(q);
  }
  return out;
}

template <typename T>
Var<T> attention_keys(ParamBinder<T>& p, const ModelConfig& cfg, Var<T> semantics) {
  Var<T> s = resize(semantics, cfg.attention_res, cfg.attention_res);
  Var<T> a = conv(p, "E.A.conv2", leaky_relu(conv(p, "E.A.conv1", s)));
  return reshape(a, {cfg.attention_channels, cfg.attention_res * cfg.attention_res});
}

template <typename T>
AttentionResult<T> compute_attention(ParamBinder<T>& p, const ModelConfig& cfg,
                                     const std::vector<Var<T>>& example_semantics, Var<T> current_semantics) {
  if (example_semantics.size() < 2) throw ContractError("attention needs K >= 2 examples");
  AttentionResult<T> r;
  r.examples = static_cast<int>(example_semantics.size());
  r.positions = cfg.attention_res * cfg.attention_res;
  r.query = attention_keys(p, cfg, current_semantics);
  std::vector<Var<T>> scores;
  for (const auto& s : example_semantics) {
    if (s.shape() != current_semantics.shape()) {
      throw DimensionError("attention: example semantics " + nn::to_string(s.shape()) + " vs current " +
                           nn::to_string(current_semantics.shape()));
    }
    r.keys.push_back(attention_keys(p, cfg, s));
    scores.push_back(matmul(r.keys.back(), r.query, true, false));
  }
  r.alpha = softmax(concat(scores), 0);
  return r;
}

template <typename T>
LayerFeatures<T> aggregate_features(const ModelConfig& cfg, const std::vector<LayerFeatures<T>>& features,
                                    const AttentionResult<T>* attention) {
  if (features.empty()) throw ContractError("aggregate_features: empty example set");
  if (features.size() == 1) return features[0];
  if (!attention) throw ContractError("aggregate_features: K > 1 requires attention");
  const int K = static_cast<int>(features.size());
  if (attention->examples != K) throw ContractError("aggregate_features: attention was computed for another K");
  const int res = cfg.attention_res, N = res * res;
  LayerFeatures<T> out;
  for (std::size_t l = 0; l < features[0].size(); ++l) {
    const int c = features[0][l].dim(0), h = features[0][l].dim(1), w = features[0][l].dim(2);
    std::optional<Var<T>> acc;
    for (int k = 0; k < K; ++k) {
      Var<T> qk = reshape(resize(features[static_cast<std::size_t>(k)][l], res, res), {c, N});
      Var<T> ak = slice(attention->alpha, static_cast<std::size_t>(k) * N * N, {N, N});
      Var<T> mixed = matmul(qk, ak);
      acc = acc ? add(*acc, mixed) : mixed;
    }
    out.push_back(resize(reshape(*acc, {c, res, res}), h, w));
  }
  return out;
}

template <typename T>
LayerWeights<T> unpack_layer_weights(const ModelConfig& cfg, int layer, Var<T> flat) {
  const auto lay = layout(cfg, layer);
  if (flat.size() != static_cast<std::size_t>(generated_size(cfg, layer))) {
    throw DimensionError("layer " + std::to_string(layer) + " expects " + std::to_string(generated_size(cfg, layer)) +
                         " generated values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  auto take = [&](const Shape& s) {
    Var<T> v = slice(flat, offset, s);
    offset += element_count(s);
    return v;
  };
  LayerWeights<T> w;
  w.s_kernel = take(lay.s_kernel);
  w.s_bias = take(lay.s_bias);
  w.gamma_kernel = take(lay.gamma_kernel);
  w.gamma_bias = take(lay.gamma_bias);
  w.beta_kernel = take(lay.beta_kernel);
  w.beta_bias = take(lay.beta_bias);
  return w;
}

template <typename T>
GeneratedWeights<T> generate_spade_weights(ParamBinder<T>& p, const ModelConfig& cfg, const LayerFeatures<T>& q) {
  if (static_cast<int>(q.size()) != cfg.layers) {
    throw ContractError("generate_spade_weights: " + std::to_string(q.size()) + " feature levels for " +
                        std::to_string(cfg.layers) + " layers");
  }
  GeneratedWeights<T> out;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string name = level_name("E.P.layer", l);
    Var<T> pooled = flatten(adaptive_avg_pool(q[static_cast<std::size_t>(l)], cfg.pool, cfg.pool));
    Var<T> hidden = leaky_relu(linear(p, name + ".fc1", pooled));
    out.push_back(unpack_layer_weights(cfg, l, linear(p, name + ".fc2", hidden)));
  }
  return out;
}

void declare_weight_gen(std::vector<ParamSpec>& specs, const ModelConfig& cfg) {
  int in = cfg.example_in_channels();
  for (int l = 0; l < cfg.layers; ++l) {
    const int out = cfg.feature_channels[static_cast<std::size_t>(l)];
    declare_conv(specs, level_name("E.F.level", l), in, out, 3);
    in = out;
  }
  declare_conv(specs, "E.A.conv1", cfg.semantic_channels, cfg.attention_channels, 3);
  declare_conv(specs, "E.A.conv2", cfg.attention_channels, cfg.attention_channels, 3);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string name = level_name("E.P.layer", l);
    declare_linear(specs, name + ".fc1", cfg.feature_channels[static_cast<std::size_t>(l)] * cfg.pool * cfg.pool,
                   cfg.hidden);
    specs.push_back({name + ".fc2.weight", {generated_size(cfg, l), cfg.hidden}, InitKind::normal,
                     cfg.generated_init_std});
    specs.push_back({name + ".fc2.bias", {generated_size(cfg, l)}, InitKind::zeros, 0.0});
  }
}

std::vector<float> static_spade_layout(const ModelConfig& cfg, int layer, std::uint64_t seed) {
  const auto lay = layout(cfg, layer);
  std::mt19937_64 rng(fnv1a("static_spade" + std::to_string(layer), seed));
  std::vector<float> out;
  auto normal = [&](const Shape& s, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (std::size_t i = 0; i < element_count(s); ++i) out.push_back(static_cast<float>(d(rng)));
  };
  auto fill = [&](const Shape& s, float v) { out.insert(out.end(), element_count(s), v); };
  const double fan_s = static_cast<double>(lay.s_kernel[1]) * lay.s_kernel[2] * lay.s_kernel[3];
  const double fan_g = static_cast<double>(lay.gamma_kernel[1]) * lay.gamma_kernel[2] * lay.gamma_kernel[3];
  normal(lay.s_kernel, std::sqrt(2.0 / 1.04 / fan_s));
  fill(lay.s_bias, 0.0f);
  normal(lay.gamma_kernel, 0.5 / std::sqrt(fan_g));
  fill(lay.gamma_bias, 1.0f);
  normal(lay.beta_kernel, 0.5 / std::sqrt(fan_g));
  fill(lay.beta_bias, 0.0f);
  return out;
}

#define FSV2V_INSTANTIATE(T)                                                                                        \
  template std::vector<T> attention_mass(const AttentionResult<T>&);                                                \
  template int select_example(const AttentionResult<T>*);                                                           \
  template LayerFeatures<T> extract_example_features(ParamBinder<T>&, const ModelConfig&, Var<T>, Var<T>);          \
  template AttentionResult<T> compute_attention(ParamBinder<T>&, const ModelConfig&, const std::vector<Var<T>>&,    \
                                                Var<T>);                                                            \
  template LayerFeatures<T> aggregate_features(const ModelConfig&, const std::vector<LayerFeatures<T>>&,            \
                                               const AttentionResult<T>*);                                          \
  template LayerWeights<T> unpack_layer_weights(const ModelConfig&, int, Var<T>);                                   \
  template GeneratedWeights<T> generate_spade_weights(ParamBinder<T>&, const ModelConfig&, const LayerFeatures<T>&);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::model
