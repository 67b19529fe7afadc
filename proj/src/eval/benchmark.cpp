#include "fsv2v/eval/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "fsv2v/model/model.hpp"
#include "fsv2v/training/trainer.hpp"

namespace fsv2v::eval {

using io::Json;

namespace {

Json metrics_json(const HeldoutMetrics& m) {
  return {{"pose_error_px", m.pose_error_px}, {"fid", std::isfinite(m.fid) ? Json(m.fid) : Json(nullptr)}, {"pixel_acc", m.pixel_acc}, {"miou", m.miou}, {"l1", m.l1}};
}

Json median_of(const std::vector<Json>& per_seed) {
  Json out = Json::object();
  for (const auto& k : kMetricNames) {
    std::vector<double> v;
    for (const auto& s : per_seed)
      if (!s.at(k).is_null()) v.push_back(s.at(k).get<double>());
    out[k] = v.size() == per_seed.size() ? Json(median(v)) : Json(nullptr);
  }
  return out;
}

BenchmarkRow make_row(std::string label, double x, std::vector<Json> per_seed) {
  BenchmarkRow r;
  r.label = std::move(label);
  r.x = x;
  r.median = median_of(per_seed);
  r.per_seed = std::move(per_seed);
  return r;
}

HeldoutOptions heldout_options(const cli::Config& c, int k) {
  HeldoutOptions o;
  o.k = k;
  o.fid_seed = c.eval.fid_seed;
  return o;
}

void log_point(bool verbose, const std::string& what, const Json& m) {
  if (verbose) std::cerr << "[bench] " << what << " " << m.dump() << "\n";
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json BenchmarkTable::to_json() const {
  Json rows_j = Json::array();
  for (const auto& r : rows) rows_j.push_back({{"label", r.label}, {"x", r.x}, {"median", r.median}, {"per_seed", r.per_seed}});
  return {{"protocol", protocol}, {"rows", rows_j}};
}

cli::Config derived_config(const cli::Config& base, model::Variant variant, int domains, std::uint64_t seed) {
  cli::Config c = base;
  c.model.variant = variant;
  if (variant != model::Variant::full) c.model.k_max = 1;
  c.train.k_max = c.model.k_max;
  if (c.train.iterations_per_epoch == 0) c.train.iterations_per_epoch = base.data.domains * base.data.clips_per_domain;
  c.data.domains = domains;
  c.train.seed = seed;
  c.eval = cli::EvalConfig{};  // evaluation choices must not retrain the cache
  c.validate();
  return c;
}

data::Dataset training_dataset(const cli::Config& c) {
  return data::generate_dataset(data::domain_range(0, c.data.domains), c.data.clips_per_domain, c.data.length,
                                c.data.height, c.data.width, c.seed);
}

data::Dataset heldout_dataset(const cli::Config& c) {
  return data::generate_dataset(data::domain_range(c.data.heldout_first, c.data.heldout_domains), c.data.heldout_clips,
                                c.data.length, c.data.height, c.data.width, c.seed);
}

nn::ParamSet<float> train_or_resume(const cli::Config& c, const data::Dataset& dataset,
                                    const std::filesystem::path& checkpoint, const std::filesystem::path& log,
                                    bool verbose) {
  training::Trainer trainer(c.model, c.train, dataset, model::initialize_model(c.model, c.train.seed));
  const std::string fp = c.fingerprint();
  if (std::filesystem::exists(checkpoint)) {
    io::Checkpoint ck = io::load_checkpoint(checkpoint);
    if (ck.meta.value("fingerprint", std::string()) == fp &&
        ck.meta.value("train_seed", std::uint64_t{0}) == c.train.seed) {
      trainer.restore(ck);
      if (verbose) std::cerr << "[train] resuming " << checkpoint << " at epoch " << trainer.epoch() << "\n";
    } else if (verbose) {
      std::cerr << "[train] ignoring " << checkpoint << " (different fingerprint or seed)\n";
    }
  }
  if (trainer.epoch() == 0 && std::filesystem::exists(log)) std::filesystem::remove(log);
  const Json meta = {{"variant", model::to_string(c.model.variant)},
                     {"fingerprint", fp},
                     {"train_seed", c.train.seed},
                     {"config", c.to_json()},
                     {"model", cli::model_to_json(c.model)}};
  training::train(trainer, {checkpoint, log}, meta, verbose);
  return trainer.params();
}

std::string cache_stem(const cli::Config& c) {
  return model::to_string(c.model.variant) + "_" + std::to_string(c.data.domains) + "d_" + c.fingerprint() + "_s" +
         std::to_string(c.train.seed);
}

nn::ParamSet<float> cached_checkpoint(const cli::Config& c, const std::filesystem::path& cache_dir, bool verbose) {
  std::filesystem::create_directories(cache_dir);
  const std::string stem = cache_stem(c);
  if (verbose) std::cerr << "[bench] checkpoint " << stem << "\n";
  return train_or_resume(c, training_dataset(c), cache_dir / (stem + ".ckpt"), cache_dir / (stem + ".jsonl"), verbose);
}

BenchmarkTable run_benchmark(const cli::Config& base, const std::string& protocol, const std::filesystem::path& cache,
                             const std::filesystem::path& checkpoint, bool verbose) {
  using model::Variant;
  BenchmarkTable table;
  table.protocol = protocol;
  const data::Dataset heldout = heldout_dataset(base);
  const int n_full = base.data.domains;

  // Parameters for the full model at the configured domain count, from the
  // given checkpoint or the cache.
  auto full_params = [&](std::uint64_t seed, cli::Config& cfg_out) {
    cfg_out = derived_config(base, Variant::full, n_full, seed);
    if (checkpoint.empty()) return cached_checkpoint(cfg_out, cache, verbose);
    if (!std::filesystem::exists(checkpoint))
      throw IoError("checkpoint " + checkpoint.string() + " does not exist; run `fsv2v train` first");
    io::Checkpoint ck = io::load_checkpoint(checkpoint);
    if (ck.meta.contains("model")) cfg_out.model = cli::model_from_json(ck.meta.at("model"));
    return ck.params;
  };
  // A supplied checkpoint is one training run; seeds only vary the cache.
  const std::vector<std::uint64_t> seeds =
      checkpoint.empty() ? base.eval.seeds : std::vector<std::uint64_t>{base.eval.seeds.front()};

  if (protocol == "vs_variants") {
    int i = 0;
    for (Variant v : {Variant::full, Variant::encoder, Variant::concatstyle, Variant::adain}) {
      std::vector<Json> per_seed;
      for (auto s : base.eval.seeds) {
        const cli::Config c = derived_config(base, v, n_full, s);
        const auto m = metrics_json(evaluate_heldout(c.model, cached_checkpoint(c, cache, verbose), heldout,
                                                     heldout_options(c, 1)));
        log_point(verbose, model::to_string(v) + " seed " + std::to_string(s), m);
        per_seed.push_back(m);
      }
      table.rows.push_back(make_row(model::to_string(v), i++, std::move(per_seed)));
    }
  } else if (protocol == "vs_num_domains") {
    for (int n : base.eval.domain_counts) {
      std::vector<Json> per_seed;
      for (auto s : base.eval.seeds) {
        const cli::Config c = derived_config(base, Variant::full, n, s);
        const auto m = metrics_json(evaluate_heldout(c.model, cached_checkpoint(c, cache, verbose), heldout,
                                                     heldout_options(c, base.eval.k)));
        log_point(verbose, std::to_string(n) + " domains seed " + std::to_string(s), m);
        per_seed.push_back(m);
      }
      table.rows.push_back(make_row("full", n, std::move(per_seed)));
    }
  } else if (protocol == "vs_K") {
    std::map<int, std::vector<Json>> by_k;
    for (auto s : seeds) {
      cli::Config c;
      const auto params = full_params(s, c);
      for (int k : base.eval.k_values) {
        const auto m = metrics_json(evaluate_heldout(c.model, params, heldout, heldout_options(c, k)));
        log_point(verbose, "K=" + std::to_string(k) + " seed " + std::to_string(s), m);
        by_k[k].push_back(m);
      }
    }
    for (int k : base.eval.k_values) table.rows.push_back(make_row("full", k, by_k[k]));
  } else if (protocol == "vs_dataset_size_adain") {
    for (int n : base.eval.adain_domain_counts) {
      std::vector<Json> full_m, adain_m, gap_m;
      for (auto s : base.eval.seeds) {
        const cli::Config cf = derived_config(base, Variant::full, n, s);
        const cli::Config ca = derived_config(base, Variant::adain, n, s);
        const auto f = metrics_json(evaluate_heldout(cf.model, cached_checkpoint(cf, cache, verbose), heldout,
                                                     heldout_options(cf, 1)));
        const auto a = metrics_json(evaluate_heldout(ca.model, cached_checkpoint(ca, cache, verbose), heldout,
                                                     heldout_options(ca, 1)));
        // Positive gap: full is better. Accuracy-style metrics flip sign.
        Json g = Json::object();
        for (const auto& k : kMetricNames) {
          if (a.at(k).is_null() || f.at(k).is_null()) {
            g[k] = nullptr;
            continue;
          }
          const double d = a.at(k).get<double>() - f.at(k).get<double>();
          g[k] = (k == "pixel_acc" || k == "miou") ? -d : d;
        }
        log_point(verbose, std::to_string(n) + " domains seed " + std::to_string(s) + " gap", g);
        full_m.push_back(f);
        adain_m.push_back(a);
        gap_m.push_back(g);
      }
      table.rows.push_back(make_row("full", n, std::move(full_m)));
      table.rows.push_back(make_row("adain", n, std::move(adain_m)));
      table.rows.push_back(make_row("gap", n, std::move(gap_m)));
    }
  } else if (protocol == "finetune_delta") {
    std::vector<Json> before, after;
    for (auto s : seeds) {
      cli::Config c;
      const auto params = full_params(s, c);
      HeldoutOptions o = heldout_options(c, base.eval.k);
      before.push_back(metrics_json(evaluate_heldout(c.model, params, heldout, o)));
      o.finetune_steps = base.eval.finetune_steps;
      o.finetune_lr = base.eval.finetune_lr;
      after.push_back(metrics_json(evaluate_heldout(c.model, params, heldout, o)));
      log_point(verbose, "finetune seed " + std::to_string(s), after.back());
    }
    table.rows.push_back(make_row("full", 0, std::move(before)));
    table.rows.push_back(make_row("full", base.eval.finetune_steps, std::move(after)));
  } else {
    throw ConfigError("unknown protocol '" + protocol + "'");
  }
  return table;
}

void write_report(const std::vector<BenchmarkTable>& tables, const std::string& fingerprint,
                  const std::filesystem::path& out_dir, bool plot) {
  std::filesystem::create_directories(out_dir);
  Json report = {{"fingerprint", fingerprint}, {"metrics", kMetricNames}, {"tables", Json::array()}};
  for (const auto& t : tables) {
    report["tables"].push_back(t.to_json());
    const auto csv = out_dir / ("curves_" + t.protocol + ".csv");
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv.string());
    f << "series,x";
    for (const auto& k : kMetricNames) f << "," << k;
    f << "\n" << std::setprecision(9);
    for (const auto& r : t.rows) {
      f << r.label << "," << r.x;
      for (const auto& k : kMetricNames) {
        const Json& v = r.median.at(k);
        f << ",";
        if (v.is_null()) f << "nan";
        else f << v.get<double>();
      }
      f << "\n";
    }
    f.close();
    if (plot) plot_curves(csv, out_dir / ("plot_" + t.protocol + ".svg"));
  }
  io::write_json(out_dir / "report.json", report);
}

void plot_curves(const std::filesystem::path& csv, const std::filesystem::path& svg) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "series" || header[1] != "x")
    throw FormatError(csv.string() + ": expected a 'series,x,...' header");
  const std::size_t n_metrics = header.size() - 2;
  // series -> points (x, values)
  std::map<std::string, std::vector<std::pair<double, std::vector<double>>>> series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, cell;
    std::getline(ss, name, ',');
    std::getline(ss, cell, ',');
    const double x = std::stod(cell);
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != n_metrics) throw FormatError(csv.string() + ": ragged row for series " + name);
    series[name].emplace_back(x, vals);
  }

  const double pw = 220, ph = 160, pad = 40;
  const double width = n_metrics * (pw + pad) + pad, height = ph + 2 * pad + 20;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ofstream o(svg);
  if (!o) throw IoError("cannot write " + svg.string());
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t m = 0; m < n_metrics; ++m) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& [name, pts] : series)
      for (const auto& [x, v] : pts) {
        if (!std::isfinite(v[m])) continue;
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, v[m]), y1 = std::max(y1, v[m]);
      }
    if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // nothing finite to draw
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1e-9, y0 -= 1e-9;
    const double left = pad + m * (pw + pad), top = pad;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    o << "<text x=\"" << left << "\" y=\"" << top - 8 << "\">" << header[m + 2] << "  [" << y0 << ", " << y1
      << "]</text>\n";
    int ci = 0;
    for (const auto& [name, pts] : series) {
      const char* col = colors[ci++ % 5];
      o << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
      for (const auto& [x, v] : pts)
        if (std::isfinite(v[m])) o << px(x) << "," << py(v[m]) << " ";
      o << "\"/>\n";
      for (const auto& [x, v] : pts)
        if (std::isfinite(v[m])) o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(v[m]) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    }
  }
  int ci = 0;
  for (const auto& [name, pts] : series) {
    o << "<text x=\"" << pad + ci * 90 << "\" y=\"" << height - 10 << "\" fill=\"" << colors[ci % 5] << "\">" << name
      << "</text>\n";
    ++ci;
  }
  o << "</svg>\n";
}

}  // namespace fsv2v::eval
