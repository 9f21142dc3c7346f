#include "dfusion/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "dfusion/checkpoint.hpp"
#include "dfusion/config.hpp"
#include "dfusion/denoiser.hpp"
#include "dfusion/errors.hpp"
#include "dfusion/fusion.hpp"
#include "dfusion/image_io.hpp"
#include "dfusion/manifest.hpp"
#include "dfusion/metrics.hpp"
#include "dfusion/synthetic.hpp"
#include "dfusion/training.hpp"

#ifndef DFUSION_VERSION
#define DFUSION_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace dfusion {

namespace {

// Options shared by every subcommand plus flags that map onto config keys.
struct Invocation {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flags;
  std::string out_dir;
  std::string data;
  std::string denoiser_path;
  std::string fusion_path;
  std::string fused_dir;
  std::size_t count = 0;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 0;
  bool no_diffusion = false;
};

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", inv.overrides, "override a config key, e.g. --set fusion.epochs=10");
  sub->add_option("--out", inv.out_dir, "output directory")->required();
}

// A flag that, when given, overrides config key `key`.
void add_key_flag(CLI::App* sub, Invocation& inv, const std::string& flag, const std::string& key,
                  const std::string& help) {
  inv.flags[key] = sub->add_option(flag, inv.flag_values[key], help);
}

RunConfig resolve_config(const Invocation& inv, CLI::App* sub) {
  RunConfig config = inv.config_file.empty() ? RunConfig{} : load_config(inv.config_file);
  for (const std::string& kv : inv.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, option] : inv.flags) {
    if (option->count() > 0) config.set(key, inv.flag_values.at(key));
  }
  if (sub->get_option("--out")->count() > 0) config.output_dir = inv.out_dir;
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

void write_record(const fs::path& dir, const std::string& command, std::span<const std::string> args,
                  const RunConfig& config, const std::string& extra = {}) {
  std::ostringstream os;
  os << "# dfusion " << DFUSION_VERSION << '\n';
  os << "# compiler " << __VERSION__ << '\n';
  os << "# command dfusion";
  for (const std::string& a : args) os << ' ' << a;
  os << "\n";
  if (!extra.empty()) os << extra;
  os << '\n' << format_config(config);
  write_text(dir / (command + ".run.txt"), os.str());
}

void write_losses(const fs::path& path, std::span<const double> losses) {
  std::ostringstream os;
  os << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, losses[i]);
    os << buf;
  }
  write_text(path, os.str());
}

struct LoadedPair {
  std::string id;
  MultiChannelImage image;
};

std::vector<LoadedPair> load_dataset(const std::string& path) {
  if (path.empty()) throw CLI::ValidationError("--data", "a dataset is required");
  const DatasetManifest manifest = open_dataset(path);
  std::vector<LoadedPair> pairs;
  pairs.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) pairs.push_back({e.id, load_pair(e.visible, e.infrared)});
  return pairs;
}

std::vector<MultiChannelImage> images_of(const std::vector<LoadedPair>& pairs) {
  std::vector<MultiChannelImage> out;
  out.reserve(pairs.size());
  for (const LoadedPair& p : pairs) out.push_back(p.image);
  return out;
}

Denoiser load_denoiser(const std::string& path) {
  if (path.empty()) throw CLI::ValidationError("--denoiser", "a denoiser checkpoint is required");
  return Denoiser::from_checkpoint(load_checkpoint(path));
}

int cmd_gen_synthetic(const Invocation& inv, const RunConfig& config, std::span<const std::string> args,
                      std::ostream& out) {
  const DatasetManifest manifest = gen_synthetic(inv.count, inv.height, inv.width, inv.seed, config.output_dir);
  fs::create_directories(config.output_dir);
  std::ostringstream extra;
  extra << "# synthetic count=" << inv.count << " height=" << inv.height << " width=" << inv.width
        << " seed=" << inv.seed << '\n';
  write_record(config.output_dir, "gen-synthetic", args, config, extra.str());
  out << "generated " << manifest.entries.size() << " pairs in " << config.output_dir.string() << '\n';
  return kExitOk;
}

int cmd_train_diffusion(const Invocation& inv, const RunConfig& config, std::span<const std::string> args,
                        std::ostream& out) {
  const auto pairs = load_dataset(inv.data);
  const auto images = images_of(pairs);
  fs::create_directories(config.output_dir);
  Denoiser initial = Denoiser::initialize(config.denoiser, config.make_schedule(), config.denoiser_seed);
  Rng rng(config.diffusion_seed);
  const std::size_t report_every = std::max<std::size_t>(1, config.diffusion.steps / 20);
  DiffusionTrainResult result =
      train_diffusion(images, std::move(initial), config.diffusion, rng, [&](std::size_t step, double loss) {
        if (step % report_every == 0) out << "step " << step << " L_diff " << loss << '\n';
      });
  save_checkpoint(result.denoiser.to_checkpoint(), config.output_dir / "denoiser.difz");
  write_losses(config.output_dir / "diffusion_loss.csv", result.step_losses);
  std::ostringstream extra;
  extra << "# pairs " << pairs.size() << "\n# first-100 mean " << head_mean(result.step_losses, 100)
        << "\n# last-100 mean " << tail_mean(result.step_losses, 100) << '\n';
  write_record(config.output_dir, "train-diffusion", args, config, extra.str());
  out << "saved " << (config.output_dir / "denoiser.difz").string() << '\n';
  return kExitOk;
}

int cmd_train_fusion(const Invocation& inv, RunConfig config, std::span<const std::string> args, std::ostream& out) {
  if (inv.no_diffusion) config.fusion.model.use_diffusion_features = false;
  const Denoiser denoiser = load_denoiser(inv.denoiser_path);
  config.fusion.validate(denoiser.schedule());
  const auto pairs = load_dataset(inv.data);
  const auto images = images_of(pairs);
  fs::create_directories(config.output_dir);
  Rng rng(config.fusion_seed);
  FusionTrainResult result = train_fusion(images, denoiser, config.fusion, rng, [&](std::size_t step, double loss) {
    if (step % 10 == 0) out << "step " << step << " L_f " << loss << '\n';
  });
  save_checkpoint(result.head.to_checkpoint(), config.output_dir / "fusion.difz");
  write_losses(config.output_dir / "fusion_loss.csv", result.step_losses);
  std::ostringstream extra;
  extra << "# variant " << (config.fusion.model.use_diffusion_features ? "diffusion-features" : "no-diffusion")
        << "\n# denoiser " << inv.denoiser_path << "\n# pairs " << pairs.size() << '\n';
  write_record(config.output_dir, "train-fusion", args, config, extra.str());
  out << "saved " << (config.output_dir / "fusion.difz").string() << '\n';
  return kExitOk;
}

int cmd_fuse(const Invocation& inv, RunConfig config, std::span<const std::string> args, std::ostream& out) {
  const Denoiser denoiser = load_denoiser(inv.denoiser_path);
  if (inv.fusion_path.empty()) throw CLI::ValidationError("--fusion", "a fusion checkpoint is required");
  const FusionHead head = FusionHead::from_checkpoint(load_checkpoint(inv.fusion_path));
  // Architecture and variant come from the checkpoint; the noise seed from the run config.
  FusionConfig model = head.config();
  model.noise_seed = config.fusion.model.noise_seed;
  config.fusion.model = model;
  const auto pairs = load_dataset(inv.data);
  const fs::path fused_dir = config.output_dir / "fused";
  fs::create_directories(fused_dir);
  for (const LoadedPair& p : pairs) {
    const FusedImage fused = fuse(p.image, &denoiser, &head, model);
    save_image(fused.tensor(), fused_dir / (p.id + ".png"));
  }
  std::ostringstream extra;
  extra << "# denoiser " << inv.denoiser_path << "\n# fusion " << inv.fusion_path << "\n# variant "
        << (model.use_diffusion_features ? "diffusion-features" : "no-diffusion") << '\n';
  write_record(config.output_dir, "fuse", args, config, extra.str());
  out << "fused " << pairs.size() << " pairs into " << fused_dir.string() << '\n';
  return kExitOk;
}

int cmd_sample(const Invocation& inv, const RunConfig& config, std::span<const std::string> args, std::ostream& out) {
  const Denoiser denoiser = load_denoiser(inv.denoiser_path);
  const fs::path dir = config.output_dir / "samples";
  fs::create_directories(dir);
  Rng rng(config.sample_seed);
  for (std::size_t k = 0; k < inv.count; ++k) {
    const SampledPair pair = sample_pair(denoiser.predictor(), denoiser.schedule(), inv.height, inv.width, rng);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu", k);
    save_image(pair.visible, dir / (std::string(name) + "_visible.png"));
    save_image(pair.infrared, dir / (std::string(name) + "_infrared.png"));
  }
  std::ostringstream extra;
  extra << "# denoiser " << inv.denoiser_path << "\n# samples " << inv.count << " of " << inv.height << "x"
        << inv.width << '\n';
  write_record(config.output_dir, "sample", args, config, extra.str());
  out << "sampled " << inv.count << " pairs into " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Invocation& inv, const RunConfig& config, std::span<const std::string> args, std::ostream& out) {
  if (inv.fused_dir.empty()) throw CLI::ValidationError("--fused", "a folder of fused images is required");
  const auto pairs = load_dataset(inv.data);
  std::vector<SourcePair> sources;
  std::vector<Tensor> fused;
  for (const LoadedPair& p : pairs) {
    sources.push_back({p.id, p.image.visible(), p.image.infrared()});
    Tensor f = load_image(fs::path(inv.fused_dir) / (p.id + ".png"));
    if (f.channels() != 3) throw std::invalid_argument("fused image for '" + p.id + "' is not a 3-channel image");
    fused.push_back(std::move(f));
  }
  const MetricReport report = evaluate(sources, fused);
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "metrics.tsv", format_table(report));
  write_text(config.output_dir / "metrics.csv", format_records(report));
  write_record(config.output_dir, "eval", args, config, "# fused " + inv.fused_dir + '\n');
  out << format_table(report);
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Infrared-visible image fusion with diffusion features", "dfusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DFUSION_VERSION);
  Invocation inv;

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic infrared/visible dataset");
  add_common(gen, inv);
  gen->add_option("--count", inv.count, "number of pairs")->required();
  gen->add_option("--height", inv.height, "image height (multiple of 16)");
  gen->add_option("--width", inv.width, "image width (multiple of 16)");
  gen->add_option("--seed", inv.seed, "generator seed");

  auto* train_diff = app.add_subcommand("train-diffusion", "train the noise-prediction network");
  add_common(train_diff, inv);
  train_diff->add_option("--data", inv.data, "manifest file or dataset folder")->required();
  add_key_flag(train_diff, inv, "--steps", "diffusion.steps", "Adam steps");
  add_key_flag(train_diff, inv, "--batch-size", "diffusion.batch_size", "pairs per step");
  add_key_flag(train_diff, inv, "--lr", "diffusion.learning_rate", "learning rate");
  add_key_flag(train_diff, inv, "--norm", "diffusion.norm", "residual norm: l2 or squared");
  add_key_flag(train_diff, inv, "--base-width", "denoiser.base_width", "first contracting width");
  add_key_flag(train_diff, inv, "--seed", "diffusion.seed", "seed for batches, timesteps and noise");

  auto* train_fus = app.add_subcommand("train-fusion", "train the fusion head on a frozen denoiser");
  add_common(train_fus, inv);
  train_fus->add_option("--data", inv.data, "manifest file or dataset folder")->required();
  train_fus->add_option("--denoiser", inv.denoiser_path, "denoiser checkpoint")->required();
  train_fus->add_flag("--no-diffusion", inv.no_diffusion, "ablation: features of the clean image, no diffusion noise");
  add_key_flag(train_fus, inv, "--epochs", "fusion.epochs", "training epochs");
  add_key_flag(train_fus, inv, "--batch-size", "fusion.batch_size", "pairs per step");
  add_key_flag(train_fus, inv, "--crop", "fusion.crop", "square crop size");
  add_key_flag(train_fus, inv, "--lr", "fusion.learning_rate", "learning rate");
  add_key_flag(train_fus, inv, "--seed", "fusion.seed", "seed for initialization, crops and shuffling");

  auto* fuse_cmd = app.add_subcommand("fuse", "fuse every pair of a dataset");
  add_common(fuse_cmd, inv);
  fuse_cmd->add_option("--data", inv.data, "manifest file or dataset folder")->required();
  fuse_cmd->add_option("--denoiser", inv.denoiser_path, "denoiser checkpoint")->required();
  fuse_cmd->add_option("--fusion", inv.fusion_path, "fusion checkpoint")->required();
  add_key_flag(fuse_cmd, inv, "--noise-seed", "fusion.noise_seed", "seed of the feature-extraction noise");

  auto* sample_cmd = app.add_subcommand("sample", "draw infrared/visible pairs by ancestral sampling");
  add_common(sample_cmd, inv);
  sample_cmd->add_option("--denoiser", inv.denoiser_path, "denoiser checkpoint")->required();
  sample_cmd->add_option("--count", inv.count, "number of pairs")->required();
  sample_cmd->add_option("--height", inv.height, "image height");
  sample_cmd->add_option("--width", inv.width, "image width");
  add_key_flag(sample_cmd, inv, "--seed", "sample.seed", "sampling seed");

  auto* eval_cmd = app.add_subcommand("eval", "six-metric report for fused images");
  add_common(eval_cmd, inv);
  eval_cmd->add_option("--data", inv.data, "manifest file or dataset folder")->required();
  eval_cmd->add_option("--fused", inv.fused_dir, "folder holding <id>.png fused images")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const RunConfig config = resolve_config(inv, sub);
    const std::string name = sub->get_name();
    if (name == "gen-synthetic") return cmd_gen_synthetic(inv, config, args, out);
    if (name == "train-diffusion") return cmd_train_diffusion(inv, config, args, out);
    if (name == "train-fusion") return cmd_train_fusion(inv, config, args, out);
    if (name == "fuse") return cmd_fuse(inv, config, args, out);
    if (name == "sample") return cmd_sample(inv, config, args, out);
    return cmd_eval(inv, config, args, out);
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace dfusion
