#include "dfusion/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dfusion/errors.hpp"

namespace dfusion {

namespace {

constexpr std::size_t kInputChannels = MultiChannelImage::kChannels;

struct StageShape {
  std::string prefix;
  std::size_t in_channels;
  std::size_t out_channels;
};

std::array<std::size_t, kUnetStages> contracting_widths(const DenoiserConfig& c) {
  const std::size_t w = c.base_width;
  return {w, 2 * w, 4 * w, 8 * w, 16 * w};
}

std::vector<StageShape> stage_shapes(const DenoiserConfig& c) {
  const auto down = contracting_widths(c);
  const auto up = c.expansive_widths();
  std::vector<StageShape> stages;
  std::size_t in = kInputChannels;
  for (std::size_t i = 0; i < kUnetStages; ++i) {
    stages.push_back({"contract." + std::to_string(i), in, down[i]});
    in = down[i];
  }
  // Stage 0 of the expansive path reads the bottleneck; later stages read the
  // upsampled previous stage concatenated with the matching contracting output.
  stages.push_back({"expand.0", down[4], up[0]});
  for (std::size_t i = 1; i < kUnetStages; ++i) {
    stages.push_back({"expand." + std::to_string(i), up[i - 1] + down[kUnetStages - 1 - i], up[i]});
  }
  return stages;
}

// Parameter order per stage: kernel, bias, time projection.
constexpr std::size_t kParamsPerStage = 3;

}  // namespace

void DenoiserConfig::validate() const {
  if (base_width < 4) throw std::invalid_argument("DenoiserConfig: base_width must be >= 4");
  if (embed_dim == 0 || embed_dim % 2 != 0) throw std::invalid_argument("DenoiserConfig: embed_dim must be even");
}

std::array<std::size_t, kUnetStages> DenoiserConfig::expansive_widths() const {
  const std::size_t w = base_width;
  return {8 * w, 4 * w, 2 * w, w, w};
}

Tensor timestep_embed(int t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("timestep_embed: dim must be positive and even");
  if (t < 0) throw std::invalid_argument("timestep_embed: t must be >= 0");
  Tensor e({dim});
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    e[2 * k] = std::sin(static_cast<double>(t) * freq);
    e[2 * k + 1] = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

void require_unet_size(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("denoiser input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by 16");
  }
}

std::vector<ParameterSpec> Denoiser::layout(const DenoiserConfig& config, InitOptions options) {
  config.validate();
  std::vector<ParameterSpec> specs;
  for (const StageShape& s : stage_shapes(config)) {
    specs.push_back({s.prefix + ".kernel", {3, 3, s.in_channels, s.out_channels}, ParamInit::kKaimingLeaky,
                     9 * s.in_channels});
    specs.push_back({s.prefix + ".bias", {s.out_channels}, ParamInit::kZero, 1});
    specs.push_back({s.prefix + ".time", {config.embed_dim, s.out_channels}, ParamInit::kLecun, config.embed_dim});
  }
  const std::size_t w = config.expansive_widths().back();
  specs.push_back({"head.kernel", {3, 3, w, kInputChannels}, options.zero_head ? ParamInit::kZero : ParamInit::kLecun,
                   9 * w});
  specs.push_back({"head.bias", {kInputChannels}, ParamInit::kZero, 1});
  return specs;
}

Denoiser::Denoiser(DenoiserConfig config, NoiseSchedule schedule, ParameterSet params)
    : config_(config), schedule_(std::move(schedule)), params_(std::move(params)) {
  config_.validate();
  if (schedule_.empty()) throw std::invalid_argument("Denoiser: empty noise schedule");
  params_.require_layout(layout(config_));
}

Denoiser Denoiser::initialize(const DenoiserConfig& config, NoiseSchedule schedule, std::uint64_t seed,
                              InitOptions options) {
  Rng rng(seed);
  const auto specs = layout(config, options);
  return Denoiser(config, std::move(schedule), ParameterSet::initialize(specs, rng));
}

Denoiser::TapedOutput Denoiser::forward(Tape& tape, std::span<const Var> params, Var noisy, int t) const {
  if (params.size() != params_.size()) throw std::invalid_argument("Denoiser::forward: parameter count mismatch");
  const Tensor& x = noisy.value();
  if (x.rank() != 3 || x.channels() != kInputChannels) {
    throw std::invalid_argument("Denoiser: expected H x W x 4 input, got " + shape_string(x.dims()));
  }
  require_unet_size(x.height(), x.width());
  schedule_.require_timestep(t);

  Var embedding = tape.constant(timestep_embed(t, config_.embed_dim).reshaped({1, config_.embed_dim}));
  std::size_t next = 0;
  auto stage = [&](Var input, std::size_t stride) {
    Var kernel = params[next], bias = params[next + 1], time = params[next + 2];
    next += kParamsPerStage;
    const std::size_t width = kernel.value().dim(3);
    Var time_bias = ad::reshape(ad::matmul(embedding, time), {width});
    Var h = ad::conv2d(input, kernel, stride, 1);
    h = ad::add_channel_bias(h, bias);
    h = ad::add_channel_bias(h, time_bias);
    return ad::leaky_relu(h, kLeakySlope);
  };

  std::array<Var, kUnetStages> skips;
  Var h = noisy;
  for (std::size_t i = 0; i < kUnetStages; ++i) {
    h = stage(h, i == 0 ? 1 : 2);
    skips[i] = h;
  }

  TapedOutput out;
  h = stage(skips[kUnetStages - 1], 1);
  out.features[0] = h;
  for (std::size_t i = 1; i < kUnetStages; ++i) {
    const Var& skip = skips[kUnetStages - 1 - i];
    Var up = ad::resample_bilinear(h, skip.value().height(), skip.value().width());
    h = stage(ad::concat_channels(up, skip), 1);
    out.features[i] = h;
  }

  Var noise = ad::conv2d(h, params[next], 1, 1);
  out.noise = ad::add_channel_bias(noise, params[next + 1]);
  return out;
}

Denoiser::Pass Denoiser::run(const MultiChannelImage& noisy, int t) const {
  Tape tape;
  const auto vars = params_.bind(tape, false);
  TapedOutput out = forward(tape, vars, tape.constant(noisy.tensor()), t);
  Pass pass;
  pass.noise = out.noise.value();
  pass.features.timestep = t;
  for (std::size_t i = 0; i < kUnetStages; ++i) pass.features.maps[i] = out.features[i].value();
  require_finite(pass.noise, "Denoiser");
  return pass;
}

Tensor Denoiser::predict_noise(const MultiChannelImage& noisy, int t) const { return run(noisy, t).noise; }

DiffusionFeatureStack Denoiser::extract_features(const MultiChannelImage& noisy, int t) const {
  return run(noisy, t).features;
}

NoisePredictor Denoiser::predictor() const {
  return [this](const Tensor& noisy, int t) { return predict_noise(MultiChannelImage(noisy), t); };
}

TapedNoisePredictor Denoiser::taped_predictor(std::vector<Var> params) const {
  return [this, params = std::move(params)](Tape& tape, Var noisy, int t) {
    return forward(tape, params, noisy, t).noise;
  };
}

Checkpoint Denoiser::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.add("meta.kind", Tensor::scalar(1.0));
  ckpt.add("meta.config", Tensor({2}, {static_cast<double>(config_.base_width), static_cast<double>(config_.embed_dim)}));
  ckpt.add("schedule.beta", Tensor({schedule_.betas().size()}, schedule_.betas()));
  params_.append_to(ckpt, "param.");
  return ckpt;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& checkpoint) {
  const Tensor* kind = checkpoint.find("meta.kind");
  if (!kind || kind->item() != 1.0) throw StateError("checkpoint does not hold a denoiser");
  const Tensor& cfg = checkpoint.get("meta.config");
  if (cfg.size() != 2) throw std::invalid_argument("denoiser checkpoint: malformed meta.config");
  DenoiserConfig config{static_cast<std::size_t>(cfg[0]), static_cast<std::size_t>(cfg[1])};
  const Tensor& betas = checkpoint.get("schedule.beta");
  NoiseSchedule schedule = NoiseSchedule::from_betas(betas.storage());
  return Denoiser(config, std::move(schedule), ParameterSet::from_checkpoint(checkpoint, layout(config), "param."));
}

}  // namespace dfusion
