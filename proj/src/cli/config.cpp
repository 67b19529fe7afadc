#include "fsv2v/cli/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstdio>

#include "fsv2v/nn/params.hpp"

namespace fsv2v::cli {

using io::Json;

namespace {

// Reads keys from a section, remembering which ones exist so leftovers can be
// reported.
class Reader {
 public:
  Reader(const Json& doc, std::string section) : doc_(doc), section_(std::move(section)) {
    if (!doc_.is_object()) throw ConfigError("'" + section_ + "' must be an object");
  }

  template <typename T>
  void operator()(const char* key, T& dst) {
    known_.emplace_back(key);
    if (!doc_.contains(key)) return;
    try {
      dst = doc_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void variant(const char* key, model::Variant& dst) {
    std::string name = model::to_string(dst);
    (*this)(key, name);
    dst = model::parse_variant(name);
  }

  void finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (std::find(known_.begin(), known_.end(), k) != known_.end()) continue;
      throw ConfigError("unknown config key '" + where(k) + "'; did you mean '" + where(nearest_key(k, known_)) + "'?");
    }
  }

 private:
  std::string where(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

  const Json& doc_;
  std::string section_;
  std::vector<std::string> known_;
};

class Writer {
 public:
  template <typename T>
  void operator()(const char* key, const T& v) {
    doc[key] = v;
  }
  void variant(const char* key, model::Variant v) { doc[key] = model::to_string(v); }
  Json doc = Json::object();
};

template <typename V, typename M>
void visit_model(V& v, M& m) {
  v.variant("variant", m.variant);
  v("semantic_channels", m.semantic_channels);
  v("layers", m.layers);
  v("main_channels", m.main_channels);
  v("spade_channels", m.spade_channels);
  v("const_channels", m.const_channels);
  v("feature_channels", m.feature_channels);
  v("hidden", m.hidden);
  v("pool", m.pool);
  v("attention_res", m.attention_res);
  v("attention_channels", m.attention_channels);
  v("generated_kernel", m.generated_kernel);
  v("generated_init_std", m.generated_init_std);
  v("example_semantics", m.example_semantics);
  v("tau", m.tau);
  v("k_max", m.k_max);
  v("warp_example", m.warp_example);
  v("flow_channels", m.flow_channels);
  v("max_displacement", m.max_displacement);
  v("style_dim", m.style_dim);
  v("disc_channels", m.disc_channels);
}

template <typename V, typename T>
void visit_train(V& v, T& t) {
  v("lr", t.lr);
  v("beta1", t.beta1);
  v("beta2", t.beta2);
  v("epochs", t.epochs);
  v("iterations_per_epoch", t.iterations_per_epoch);
  v("t_start", t.t_start);
  v("t_double_every", t.t_double_every);
  v("t_cap", t.t_cap);
  v("lambda_adv", t.lambda_adv);
  v("lambda_fm", t.lambda_fm);
  v("lambda_flow", t.lambda_flow);
  v("lambda_warp", t.lambda_warp);
  v("temporal_discriminator", t.temporal_discriminator);
}

template <typename V, typename D>
void visit_data(V& v, D& d) {
  v("domains", d.domains);
  v("heldout_first", d.heldout_first);
  v("heldout_domains", d.heldout_domains);
  v("clips_per_domain", d.clips_per_domain);
  v("heldout_clips", d.heldout_clips);
  v("length", d.length);
  v("height", d.height);
  v("width", d.width);
}

template <typename V, typename E>
void visit_eval(V& v, E& e) {
  v("protocols", e.protocols);
  v("seeds", e.seeds);
  v("domain_counts", e.domain_counts);
  v("k_values", e.k_values);
  v("adain_domain_counts", e.adain_domain_counts);
  v("k", e.k);
  v("finetune_steps", e.finetune_steps);
  v("finetune_lr", e.finetune_lr);
  v("fid_seed", e.fid_seed);
  v("plot", e.plot);
}

template <typename V, typename P>
void visit_paths(V& v, P& p) {
  v("data", p.data);
  v("checkpoint", p.checkpoint);
  v("log", p.log);
  v("output", p.output);
  v("cache", p.cache);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const char* kProtocols[] = {"vs_variants", "vs_num_domains", "vs_K", "vs_dataset_size_adain", "finetune_delta"};

}  // namespace

std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(key, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Json model_to_json(const model::ModelConfig& m) {
  Writer w;
  visit_model(w, m);
  w.doc["height"] = m.height;
  w.doc["width"] = m.width;
  return w.doc;
}

model::ModelConfig model_from_json(const Json& doc) {
  model::ModelConfig m;
  Json rest = doc;
  if (rest.contains("height")) {
    m.height = rest.at("height");
    rest.erase("height");
  }
  if (rest.contains("width")) {
    m.width = rest.at("width");
    rest.erase("width");
  }
  Reader r(rest, "model");
  visit_model(r, m);
  r.finish();
  m.validate();
  return m;
}

Json Config::to_json() const {
  Writer m, t, d, e, p;
  visit_model(m, model);
  visit_train(t, train);
  t.doc["k_max"] = train.k_max;
  visit_data(d, data);
  visit_eval(e, eval);
  visit_paths(p, paths);
  return {{"seed", seed}, {"model", m.doc}, {"train", t.doc}, {"data", d.doc}, {"eval", e.doc}, {"paths", p.doc}};
}

std::string Config::fingerprint() const {
  Json doc = to_json();
  doc.erase("paths");  // where files live does not change results
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(nn::fnv1a(doc.dump())));
  return buf;
}

void Config::validate() const {
  model.validate();
  train.validate();
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (data.domains < 1 || data.heldout_domains < 1) fail("data.domains and data.heldout_domains must be >= 1");
  if (data.clips_per_domain < 1 || data.heldout_clips < 2) fail("need clips_per_domain >= 1 and heldout_clips >= 2");
  if (data.length < 2 || data.length > 64) fail("data.length must be in [2, 64]");
  if (data.heldout_first < data.domains) fail("data.heldout_first must not overlap the training domain ids");
  for (int n : eval.domain_counts)
    if (n < 1 || data.heldout_first < n) fail("eval.domain_counts entries must be >= 1 and below data.heldout_first");
  for (int n : eval.adain_domain_counts)
    if (n < 1 || data.heldout_first < n) fail("eval.adain_domain_counts entries must be >= 1 and below data.heldout_first");
  for (int k : eval.k_values)
    if (k < 1) fail("eval.k_values entries must be >= 1");
  if (eval.seeds.empty()) fail("eval.seeds must not be empty");
  if (eval.k < 1) fail("eval.k must be >= 1");
  for (const auto& p : eval.protocols) {
    if (std::find(std::begin(kProtocols), std::end(kProtocols), p) == std::end(kProtocols)) {
      fail("unknown protocol '" + p + "'; did you mean '" +
           nearest_key(p, std::vector<std::string>(std::begin(kProtocols), std::end(kProtocols))) + "'?");
    }
  }
}

Config parse_config(const Json& doc) {
  Config c;
  Reader top(doc, "");
  top("seed", c.seed);
  Json model = Json::object(), train = Json::object(), data = Json::object(), eval = Json::object(),
       paths = Json::object();
  top("model", model);
  top("train", train);
  top("data", data);
  top("eval", eval);
  top("paths", paths);
  top.finish();

  Reader m(model, "model");
  visit_model(m, c.model);
  m.finish();
  Reader t(train, "train");
  visit_train(t, c.train);
  t("k_max", c.model.k_max);
  t.finish();
  Reader d(data, "data");
  visit_data(d, c.data);
  d.finish();
  Reader e(eval, "eval");
  visit_eval(e, c.eval);
  e.finish();
  Reader p(paths, "paths");
  visit_paths(p, c.paths);
  p.finish();

  c.model.height = c.data.height;
  c.model.width = c.data.width;
  c.train.k_max = c.model.k_max;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) { return parse_config(io::read_json(path)); }

void apply_seed_override(Config& c) {
  const char* env = std::getenv("FSV2V_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("FSV2V_SEED must be an unsigned integer, got '") + env + "'");
  c.seed = v;
  c.train.seed = v;
}

}  // namespace fsv2v::cli
