// fsv2v: dataset generation, training, synthesis, fine-tuning and benchmarks.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "fsv2v/cli/config.hpp"
#include "fsv2v/data/dataset.hpp"
#include "fsv2v/eval/benchmark.hpp"
#include "fsv2v/io/png.hpp"
#include "fsv2v/model/model.hpp"

namespace fs = std::filesystem;
using namespace fsv2v;

namespace {

struct Options {
  std::string workdir = ".";
  std::string config;
  bool verbose = false;

  // dataset-gen
  int domains = 16, clips = 8, length = 8, height = 64, width = 64, first_domain = 0;
  std::uint64_t data_seed = 1;
  std::string out;

  // train / synthesize / finetune / eval
  std::string checkpoint, data_dir, log, semantics_dir, examples_dir;
  int k = 1, steps = 50;
  double lr = 1e-4;
  std::vector<std::string> protocols;
  bool plot = false;
};

fs::path in_workdir(const Options& o, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(o.workdir) / path;
}

cli::Config resolve_config(const Options& o) {
  cli::Config c = o.config.empty() ? cli::parse_config(io::Json::object()) : cli::load_config(in_workdir(o, o.config));
  cli::apply_seed_override(c);
  std::cerr << "config fingerprint " << c.fingerprint() << " seed " << c.seed << "\n";
  return c;
}

std::string frame_name(const char* stem, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d.png", stem, t);
  return buf;
}

// sem_%05d.png label maps (and frame_%05d.png images when `with_frames`) from
// a clip-style directory, in index order until the first gap.
struct FrameDir {
  std::vector<nn::Tensor<float>> semantics, frames;
};

FrameDir read_frame_dir(const fs::path& dir, int S, bool with_frames) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  FrameDir out;
  for (int t = 0; fs::exists(dir / frame_name("sem", t)); ++t) {
    int h = 0, w = 0;
    const auto labels = io::read_png_gray(dir / frame_name("sem", t), h, w);
    nn::Tensor<float> s({S, h, w}, 0.0f);
    for (int i = 0; i < h * w; ++i) {
      if (labels[i] >= S) throw FormatError(dir.string() + ": label " + std::to_string(labels[i]) + " >= " + std::to_string(S));
      s.values()[static_cast<std::size_t>(labels[i]) * h * w + i] = 1.0f;
    }
    out.semantics.push_back(std::move(s));
    if (with_frames) out.frames.push_back(io::read_png_rgb(dir / frame_name("frame", t)));
  }
  if (out.semantics.empty()) throw FormatError(dir.string() + " holds no sem_00000.png");
  return out;
}

// Model config and parameters from a checkpoint. With a config, a different
// fingerprint only warns, but parameter shapes must agree with the config.
std::pair<model::ModelConfig, nn::ParamSet<float>> load_model(const fs::path& path,
                                                              const std::optional<cli::Config>& config) {
  if (!fs::exists(path)) throw IoError("checkpoint " + path.string() + " does not exist");
  io::Checkpoint ck = io::load_checkpoint(path);
  if (!config) {
    if (!ck.meta.contains("model")) throw FormatError(path.string() + ": manifest lacks the model config");
    return {cli::model_from_json(ck.meta.at("model")), std::move(ck.params)};
  }
  const std::string fp = ck.meta.value("fingerprint", std::string("unknown"));
  if (fp != config->fingerprint())
    std::cerr << "warning: checkpoint fingerprint " << fp << " differs from config " << config->fingerprint() << "\n";
  for (const auto& spec : model::declare_model(config->model)) {
    if (!ck.params.contains(spec.name)) throw DimensionError(path.string() + " lacks parameter " + spec.name);
    if (ck.params.at(spec.name).shape() != spec.shape) {
      throw DimensionError(path.string() + ": parameter " + spec.name + " has shape " +
                           nn::to_string(ck.params.at(spec.name).shape()) + ", config expects " +
                           nn::to_string(spec.shape));
    }
  }
  return {config->model, std::move(ck.params)};
}

engine::ExampleSet read_examples(const fs::path& dir, const model::ModelConfig& m, int k) {
  FrameDir fd = read_frame_dir(dir, m.semantic_channels, true);
  engine::ExampleSet ex;
  for (int f : eval::example_frames(static_cast<int>(fd.frames.size()), k)) {
    ex.images.push_back(fd.frames[f]);
    ex.semantics.push_back(fd.semantics[f]);
  }
  return ex;
}

std::optional<cli::Config> optional_config(const Options& o) {
  if (o.config.empty()) return std::nullopt;
  return resolve_config(o);
}

int cmd_dataset_gen(const Options& o) {
  const auto ds = data::generate_dataset(data::domain_range(o.first_domain, o.domains), o.clips, o.length, o.height,
                                         o.width, o.data_seed);
  const fs::path out = in_workdir(o, o.out);
  data::persist_dataset(ds, out);
  std::cout << "wrote " << ds.clips.size() << " clips to " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const cli::Config c = resolve_config(o);
  const fs::path data_dir = in_workdir(o, o.data_dir.empty() ? c.paths.data : o.data_dir);
  data::Dataset ds;
  if (fs::exists(data_dir / "dataset.json")) {
    ds = data::load_dataset(data_dir);
    if (ds.clips.empty()) throw FormatError(data_dir.string() + " holds no clips");
    if (ds.clips[0].height() != c.model.height || ds.clips[0].width() != c.model.width) {
      throw ConfigError("dataset is " + std::to_string(ds.clips[0].height()) + "x" + std::to_string(ds.clips[0].width()) +
                        " but data.height/width say " + std::to_string(c.model.height) + "x" +
                        std::to_string(c.model.width));
    }
  } else {
    std::cerr << "no dataset at " << data_dir.string() << ", generating from the config\n";
    ds = eval::training_dataset(c);
  }
  const fs::path ckpt = in_workdir(o, o.checkpoint.empty() ? c.paths.checkpoint : o.checkpoint);
  const fs::path log = in_workdir(o, o.log.empty() ? c.paths.log : o.log);
  eval::train_or_resume(c, ds, ckpt, log, o.verbose);
  std::cout << "checkpoint " << ckpt.string() << "\nlog " << log.string() << "\n";
  return 0;
}

int cmd_synthesize(const Options& o) {
  const auto cfg = optional_config(o);
  auto [m, params] = load_model(in_workdir(o, o.checkpoint), cfg);
  const FrameDir sem = read_frame_dir(in_workdir(o, o.semantics_dir), m.semantic_channels, false);
  const auto ex = read_examples(in_workdir(o, o.examples_dir), m, o.k);
  const auto video = engine::rollout_video(m, params, ex, sem.semantics);
  const fs::path out = in_workdir(o, o.out);
  fs::create_directories(out);
  for (std::size_t t = 0; t < video.size(); ++t) {
    io::write_png_rgb(out / frame_name("frame", static_cast<int>(t)), video[t]);
    fs::copy_file(in_workdir(o, o.semantics_dir) / frame_name("sem", static_cast<int>(t)),
                  out / frame_name("sem", static_cast<int>(t)), fs::copy_options::overwrite_existing);
  }
  io::write_json(out / "synthesis.json", {{"frames", video.size()}, {"k", o.k}, {"checkpoint", o.checkpoint},
                                          {"variant", model::to_string(m.variant)}});
  std::cout << "wrote " << video.size() << " frames to " << out.string() << "\n";
  return 0;
}

int cmd_finetune(const Options& o) {
  const auto cfg = optional_config(o);
  const fs::path src = in_workdir(o, o.checkpoint);
  auto [m, params] = load_model(src, cfg);
  const auto ex = read_examples(in_workdir(o, o.examples_dir), m, o.k);
  engine::FinetuneOptions fo;
  fo.steps = o.steps;
  fo.lr = o.lr;
  io::Checkpoint out;
  out.meta = io::load_checkpoint(src).meta;
  out.meta.erase("trainer");
  out.meta["finetune"] = {{"steps", o.steps}, {"lr", o.lr}, {"k", o.k}, {"examples", o.examples_dir}};
  out.params = engine::finetune_on_examples(m, std::move(params), ex, fo);
  const fs::path dst = in_workdir(o, o.out);
  io::save_checkpoint(dst, out);
  std::cout << "fine-tuned checkpoint " << dst.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  cli::Config c = resolve_config(o);
  const std::string fingerprint = c.fingerprint();
  const std::vector<std::string> protocols = o.protocols.empty() ? c.eval.protocols : o.protocols;
  c.eval.protocols = protocols;
  c.validate();
  std::vector<eval::BenchmarkTable> tables;
  const fs::path ckpt = o.checkpoint.empty() ? fs::path() : in_workdir(o, o.checkpoint);
  for (const auto& p : protocols)
    tables.push_back(eval::run_benchmark(c, p, in_workdir(o, c.paths.cache), ckpt, o.verbose));
  const fs::path out = in_workdir(o, o.out.empty() ? c.paths.output : o.out);
  eval::write_report(tables, fingerprint, out, o.plot || c.eval.plot);
  std::cout << "report " << (out / "report.json").string() << "\n";
  return 0;
}

int cmd_plot(const Options& o) {
  const fs::path out = in_workdir(o, o.out.empty() ? "out" : o.out);
  int n = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("curves_", 0) != 0 || e.path().extension() != ".csv") continue;
    const std::string protocol = name.substr(7, name.size() - 11);
    eval::plot_curves(e.path(), out / ("plot_" + protocol + ".svg"));
    ++n;
  }
  if (n == 0) throw IoError("no curves_*.csv in " + out.string());
  std::cout << "wrote " << n << " plots to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot video-to-video synthesis on synthetic domains"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--workdir", o.workdir, "Base directory for relative paths");
  app.add_flag("-v,--verbose", o.verbose, "Progress on stderr");

  auto* gen = app.add_subcommand("dataset-gen", "Render synthetic domains to a dataset directory");
  gen->add_option("--domains", o.domains, "Number of domains")->check(CLI::PositiveNumber);
  gen->add_option("--first-domain", o.first_domain, "First domain id");
  gen->add_option("--clips", o.clips, "Clips per domain")->check(CLI::PositiveNumber);
  gen->add_option("--t", o.length, "Frames per clip")->check(CLI::Range(2, 64));
  gen->add_option("--height", o.height)->check(CLI::PositiveNumber);
  gen->add_option("--width", o.width)->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.data_seed, "Domain appearance seed");
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model; resumes a matching checkpoint");
  tr->add_option("--config", o.config, "Config JSON");
  tr->add_option("--data", o.data_dir, "Dataset directory (default paths.data)");
  tr->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default paths.checkpoint)");
  tr->add_option("--log", o.log, "Training log (default paths.log)");

  auto* syn = app.add_subcommand("synthesize", "Render a video from semantic frames and K examples");
  syn->add_option("--config", o.config, "Config JSON; checks the checkpoint against it");
  syn->add_option("--checkpoint", o.checkpoint)->required();
  syn->add_option("--semantics-dir", o.semantics_dir, "Directory of sem_%05d.png label maps")->required();
  syn->add_option("--examples-dir", o.examples_dir, "Clip directory the examples come from")->required();
  syn->add_option("--k", o.k, "Number of example frames")->check(CLI::PositiveNumber);
  syn->add_option("--out", o.out, "Output frame directory")->required();

  auto* ft = app.add_subcommand("finetune", "Adapt the weight generator to examples of one domain");
  ft->add_option("--config", o.config, "Config JSON; checks the checkpoint against it");
  ft->add_option("--checkpoint", o.checkpoint)->required();
  ft->add_option("--examples-dir", o.examples_dir)->required();
  ft->add_option("--k", o.k)->check(CLI::PositiveNumber);
  ft->add_option("--steps", o.steps)->check(CLI::NonNegativeNumber);
  ft->add_option("--lr", o.lr)->check(CLI::PositiveNumber);
  ft->add_option("--out", o.out, "Output checkpoint")->required();

  auto* ev = app.add_subcommand("eval", "Run benchmark protocols");
  ev->add_option("--config", o.config, "Config JSON");
  ev->add_option("--protocol", o.protocols, "Protocol (repeatable; default eval.protocols)");
  ev->add_option("--checkpoint", o.checkpoint, "Use this checkpoint for vs_K and finetune_delta");
  ev->add_option("--out", o.out, "Report directory (default paths.output)");
  ev->add_flag("--plot", o.plot, "Also write plot_<protocol>.svg");

  auto* pl = app.add_subcommand("plot", "Render plot_<protocol>.svg from curves_<protocol>.csv");
  pl->add_option("--out", o.out, "Report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_dataset_gen(o);
    if (*tr) return cmd_train(o);
    if (*syn) return cmd_synthesize(o);
    if (*ft) return cmd_finetune(o);
    if (*ev) return cmd_eval(o);
    if (*pl) return cmd_plot(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
