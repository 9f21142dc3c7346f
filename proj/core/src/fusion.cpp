#include "dfusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dfusion/errors.hpp"

namespace dfusion {

namespace {

constexpr std::size_t kHeadLayers = 3;

std::string proj_name(std::size_t t, std::size_t s) {
  return "proj.t" + std::to_string(t) + ".s" + std::to_string(s);
}

Tensor as_hw1(const Tensor& channel, const char* what) {
  if (channel.rank() == 2) return channel.reshaped({channel.dim(0), channel.dim(1), 1});
  if (channel.rank() == 3 && channel.channels() == 1) return channel;
  throw std::invalid_argument(std::string(what) + ": expected a single channel, got " + shape_string(channel.dims()));
}

// Diagonal [3, 3, C, C] kernel applying the same 3x3 filter to every channel.
Tensor depthwise_kernel(const std::array<double, 9>& taps, std::size_t channels) {
  Tensor k({3, 3, channels, channels});
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < channels; ++c) k[((y * 3 + x) * channels + c) * channels + c] = taps[y * 3 + x];
  return k;
}

constexpr std::array<double, 9> kSobelX{-1, 0, 1, -2, 0, 2, -1, 0, 1};
constexpr std::array<double, 9> kSobelY{-1, -2, -1, 0, 0, 0, 1, 2, 1};

void require_loss_inputs(const Tensor& fused, const Tensor& infrared, const Tensor& visible) {
  if (fused.rank() != 3 || fused.channels() != 3) {
    throw std::invalid_argument("fusion loss: fused image must be H x W x 3, got " + shape_string(fused.dims()));
  }
  if (!visible.same_shape(fused)) {
    throw std::invalid_argument("fusion loss: visible " + shape_string(visible.dims()) + " vs fused " +
                                shape_string(fused.dims()));
  }
  if (infrared.rank() != 3 || infrared.channels() != 1 || infrared.height() != fused.height() ||
      infrared.width() != fused.width()) {
    throw std::invalid_argument("fusion loss: infrared " + shape_string(infrared.dims()) + " vs fused " +
                                shape_string(fused.dims()));
  }
}

// max(src_ir, src_vis^i) per channel, where src_ir is broadcast across channels.
Tensor channelwise_max(const Tensor& ir, const Tensor& vis) {
  Tensor out = vis;
  const std::size_t c = vis.channels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(ir[i / c], vis[i]);
  return out;
}

Tensor sobel_magnitude_multi(const Tensor& image) {
  Tensor abs_image = image;
  for (double& v : abs_image.data()) v = std::abs(v);
  const std::size_t c = image.channels();
  Tensor gx = conv2d(abs_image, depthwise_kernel(kSobelX, c), 1, 1);
  Tensor gy = conv2d(abs_image, depthwise_kernel(kSobelY, c), 1, 1);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = std::abs(gx[i]) + std::abs(gy[i]);
  return gx;
}

Tensor reflect_pad(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const std::size_t h = image.height(), w = image.width(), c = image.channels();
  auto reflect = [](std::size_t i, std::size_t n) {
    if (n == 1) return std::size_t{0};
    const std::size_t period = 2 * (n - 1);
    std::size_t r = i % period;
    return r < n ? r : period - r;
  };
  Tensor out({out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = image.at(reflect(y, h), reflect(x, w), k);
  return out;
}

std::size_t round_up16(std::size_t n) { return (n + 15) / 16 * 16; }

}  // namespace

FusedImage::FusedImage(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3 || pixels_.channels() != 3) {
    throw std::invalid_argument("FusedImage: expected H x W x 3, got " + shape_string(pixels_.dims()));
  }
  require_finite(pixels_, "FusedImage");
}

void FusionConfig::validate(const NoiseSchedule& schedule) const {
  for (int t : timesteps) schedule.require_timestep(t);
  if (feature_width == 0 || hidden_width == 0) throw std::invalid_argument("FusionConfig: widths must be positive");
}

void FusionTrainConfig::validate(const NoiseSchedule& schedule) const {
  model.validate(schedule);
  if (crop == 0 || crop % 16 != 0) throw std::invalid_argument("FusionTrainConfig: crop must be a positive multiple of 16");
  if (batch_size == 0) throw std::invalid_argument("FusionTrainConfig: batch size must be positive");
  if (learning_rate < 0.0) throw std::invalid_argument("FusionTrainConfig: learning rate must be >= 0");
}

std::vector<ParameterSpec> FusionHead::layout(const FusionConfig& config, const StageWidths& stage_widths) {
  std::vector<ParameterSpec> specs;
  const std::size_t cf = config.feature_width;
  for (std::size_t t = 0; t < kFeatureTimesteps; ++t) {
    for (std::size_t s = 0; s < kUnetStages; ++s) {
      specs.push_back({proj_name(t, s) + ".kernel", {1, 1, stage_widths[s], cf}, ParamInit::kLecun, stage_widths[s]});
    }
  }
  const std::size_t hidden = config.hidden_width;
  const std::array<std::size_t, kHeadLayers + 1> widths{kFeatureTimesteps * cf, hidden, hidden, 3};
  for (std::size_t l = 0; l < kHeadLayers; ++l) {
    const bool last = l + 1 == kHeadLayers;
    const std::string prefix = "head." + std::to_string(l);
    specs.push_back({prefix + ".kernel", {3, 3, widths[l], widths[l + 1]}, last ? ParamInit::kZero : ParamInit::kKaimingLeaky,
                     9 * widths[l]});
    specs.push_back({prefix + ".bias", {widths[l + 1]}, ParamInit::kZero, 1});
  }
  return specs;
}

FusionHead::FusionHead(FusionConfig config, StageWidths stage_widths, ParameterSet params)
    : config_(config), stage_widths_(stage_widths), params_(std::move(params)) {
  params_.require_layout(layout(config_, stage_widths_));
}

FusionHead FusionHead::initialize(const FusionConfig& config, const StageWidths& stage_widths, std::uint64_t seed) {
  Rng rng(seed);
  const auto specs = layout(config, stage_widths);
  return FusionHead(config, stage_widths, ParameterSet::initialize(specs, rng));
}

void FusionHead::require_stacks(const TapedStacks& stacks) const {
  const Tensor& finest = stacks[0][kUnetStages - 1].value();
  for (std::size_t t = 0; t < kFeatureTimesteps; ++t) {
    for (std::size_t s = 0; s < kUnetStages; ++s) {
      const Tensor& map = stacks[t][s].value();
      const std::size_t scale = std::size_t{1} << (kUnetStages - 1 - s);
      if (map.rank() != 3 || map.channels() != stage_widths_[s] || map.height() * scale != finest.height() ||
          map.width() * scale != finest.width()) {
        throw std::invalid_argument("aggregate_features: stage " + std::to_string(s) + " of timestep slot " +
                                    std::to_string(t) + " has shape " + shape_string(map.dims()) +
                                    ", which breaks the H/16..H ladder of width " + std::to_string(stage_widths_[s]));
      }
    }
  }
}

Var FusionHead::aggregate(std::span<const Var> params, const TapedStacks& stacks) const {
  if (params.size() != params_.size()) throw std::invalid_argument("FusionHead: parameter count mismatch");
  require_stacks(stacks);
  const std::size_t h = stacks[0][kUnetStages - 1].value().height();
  const std::size_t w = stacks[0][kUnetStages - 1].value().width();
  Var features;
  for (std::size_t t = 0; t < kFeatureTimesteps; ++t) {
    Var sum;
    for (std::size_t s = 0; s < kUnetStages; ++s) {
      Var resampled = ad::resample_bilinear(stacks[t][s], h, w);
      Var projected = ad::conv2d(resampled, params[t * kUnetStages + s], 1, 0);
      sum = sum.valid() ? ad::add(sum, projected) : projected;
    }
    features = features.valid() ? ad::concat_channels(features, sum) : sum;
  }
  return features;
}

Var FusionHead::head(std::span<const Var> params, Var features) const {
  if (params.size() != params_.size()) throw std::invalid_argument("FusionHead: parameter count mismatch");
  const std::size_t expected = kFeatureTimesteps * config_.feature_width;
  if (features.value().rank() != 3 || features.value().channels() != expected) {
    throw std::invalid_argument("fusion_head: expected " + std::to_string(expected) + " feature channels, got " +
                                shape_string(features.value().dims()));
  }
  std::size_t next = kFeatureTimesteps * kUnetStages;
  Var h = features;
  for (std::size_t l = 0; l < kHeadLayers; ++l) {
    h = ad::add_channel_bias(ad::conv2d(h, params[next], 1, 1), params[next + 1]);
    next += 2;
    h = l + 1 < kHeadLayers ? ad::leaky_relu(h, kLeakySlope) : ad::tanh(h);
  }
  return ad::affine(h, 0.5, 0.5);
}

Tensor FusionHead::aggregate_features(const std::array<DiffusionFeatureStack, kFeatureTimesteps>& stacks) const {
  Tape tape;
  const auto vars = params_.bind(tape, false);
  TapedStacks taped;
  for (std::size_t t = 0; t < kFeatureTimesteps; ++t)
    for (std::size_t s = 0; s < kUnetStages; ++s) taped[t][s] = tape.constant(stacks[t].maps[s]);
  return aggregate(vars, taped).value();
}

FusedImage FusionHead::fusion_head(const Tensor& features) const {
  Tape tape;
  const auto vars = params_.bind(tape, false);
  Tensor out = head(vars, tape.constant(features)).value();
  return FusedImage(std::move(out));
}

Checkpoint FusionHead::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.add("meta.kind", Tensor::scalar(2.0));
  ckpt.add("meta.config", Tensor({6}, {static_cast<double>(config_.timesteps[0]), static_cast<double>(config_.timesteps[1]),
                                       static_cast<double>(config_.timesteps[2]), static_cast<double>(config_.feature_width),
                                       static_cast<double>(config_.hidden_width),
                                       config_.use_diffusion_features ? 1.0 : 0.0}));
  std::vector<double> widths(stage_widths_.begin(), stage_widths_.end());
  ckpt.add("meta.stage_widths", Tensor({kUnetStages}, widths));
  params_.append_to(ckpt, "param.");
  return ckpt;
}

FusionHead FusionHead::from_checkpoint(const Checkpoint& checkpoint) {
  const Tensor* kind = checkpoint.find("meta.kind");
  if (!kind || kind->item() != 2.0) throw StateError("checkpoint does not hold a fusion head");
  const Tensor& cfg = checkpoint.get("meta.config");
  const Tensor& widths = checkpoint.get("meta.stage_widths");
  if (cfg.size() != 6 || widths.size() != kUnetStages) throw std::invalid_argument("fusion checkpoint: malformed metadata");
  FusionConfig config;
  for (std::size_t i = 0; i < kFeatureTimesteps; ++i) config.timesteps[i] = static_cast<int>(cfg[i]);
  config.feature_width = static_cast<std::size_t>(cfg[3]);
  config.hidden_width = static_cast<std::size_t>(cfg[4]);
  config.use_diffusion_features = cfg[5] != 0.0;
  StageWidths stage_widths{};
  for (std::size_t i = 0; i < kUnetStages; ++i) stage_widths[i] = static_cast<std::size_t>(widths[i]);
  return FusionHead(config, stage_widths, ParameterSet::from_checkpoint(checkpoint, layout(config, stage_widths), "param."));
}

Tensor sobel_gradient(const Tensor& channel) {
  Tensor image = as_hw1(channel, "sobel_gradient");
  if (image.height() < 3 || image.width() < 3) throw std::invalid_argument("sobel_gradient: input smaller than 3x3");
  Tensor gx = conv2d(image, depthwise_kernel(kSobelX, 1), 1, 1);
  Tensor gy = conv2d(image, depthwise_kernel(kSobelY, 1), 1, 1);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = std::abs(gx[i]) + std::abs(gy[i]);
  return gx.reshaped(channel.dims());
}

Var loss_mcg(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible, GradientLossForm form) {
  require_loss_inputs(fused.value(), infrared, visible);
  const std::size_t h = visible.height(), w = visible.width(), c = visible.channels();
  if (h < 3 || w < 3) throw std::invalid_argument("loss_mcg: images smaller than 3x3");
  Tensor target = channelwise_max(sobel_magnitude_multi(infrared), sobel_magnitude_multi(visible));

  Var kx = tape.constant(depthwise_kernel(kSobelX, c));
  Var ky = tape.constant(depthwise_kernel(kSobelY, c));
  Var gx = ad::conv2d(fused, kx, 1, 1);
  Var gy = ad::conv2d(fused, ky, 1, 1);
  Var grad = form == GradientLossForm::kMagnitude ? ad::add(ad::abs(gx), ad::abs(gy)) : ad::add(gx, gy);
  Var l1 = ad::sum(ad::abs(ad::sub(grad, tape.constant(std::move(target)))));
  return ad::affine(l1, 1.0 / static_cast<double>(h * w));
}

Var loss_mci(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible) {
  require_loss_inputs(fused.value(), infrared, visible);
  const std::size_t h = visible.height(), w = visible.width();
  Var l1 = ad::sum(ad::abs(ad::sub(fused, tape.constant(channelwise_max(infrared, visible)))));
  return ad::affine(l1, 1.0 / static_cast<double>(h * w));
}

Var loss_fusion(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible, GradientLossForm form) {
  return ad::add(loss_mcg(tape, fused, infrared, visible, form), loss_mci(tape, fused, infrared, visible));
}

double loss_mcg(const Tensor& fused, const Tensor& infrared, const Tensor& visible, GradientLossForm form) {
  Tape tape;
  return loss_mcg(tape, tape.constant(fused), infrared, visible, form).value().item();
}

double loss_mci(const Tensor& fused, const Tensor& infrared, const Tensor& visible) {
  Tape tape;
  return loss_mci(tape, tape.constant(fused), infrared, visible).value().item();
}

double loss_fusion(const Tensor& fused, const Tensor& infrared, const Tensor& visible, GradientLossForm form) {
  Tape tape;
  return loss_fusion(tape, tape.constant(fused), infrared, visible, form).value().item();
}

std::array<DiffusionFeatureStack, kFeatureTimesteps> fusion_features(const MultiChannelImage& pair,
                                                                     const Denoiser& denoiser,
                                                                     const FusionConfig& config) {
  const MultiChannelImage clean = pair.to_diffusion_range();
  std::array<DiffusionFeatureStack, kFeatureTimesteps> stacks;
  if (!config.use_diffusion_features) {
    DiffusionFeatureStack plain = denoiser.extract_features(clean, 1);
    stacks.fill(plain);
    return stacks;
  }
  for (std::size_t k = 0; k < kFeatureTimesteps; ++k) {
    Rng noise_rng(mix_seed(config.noise_seed, k));
    Tensor gamma = noise_rng.normal_tensor(clean.tensor().dims());
    DiffusionSample sample = q_sample(clean, config.timesteps[k], gamma, denoiser.schedule());
    stacks[k] = denoiser.extract_features(sample.image, config.timesteps[k]);
  }
  return stacks;
}

FusedImage fuse(const MultiChannelImage& pair, const Denoiser* denoiser, const FusionHead* head,
                const FusionConfig& config) {
  if (!denoiser) throw StateError("fuse: no denoiser checkpoint loaded");
  if (!head) throw StateError("fuse: no fusion checkpoint loaded");
  config.validate(denoiser->schedule());
  const std::size_t h = pair.height(), w = pair.width();
  const std::size_t ph = round_up16(h), pw = round_up16(w);
  const MultiChannelImage padded = (ph == h && pw == w) ? pair : MultiChannelImage(reflect_pad(pair.tensor(), ph, pw));

  const Tensor features = head->aggregate_features(fusion_features(padded, *denoiser, config));
  FusedImage fused = head->fusion_head(features);
  if (ph == h && pw == w) return fused;
  return FusedImage(crop(fused.tensor(), 0, 0, h, w));
}

FusionTrainResult train_fusion(std::span<const MultiChannelImage> dataset, const Denoiser& denoiser,
                               const FusionTrainConfig& config, Rng& rng, const TrainProgress& progress) {
  if (dataset.empty()) throw std::invalid_argument("train_fusion: empty dataset");
  config.validate(denoiser.schedule());
  for (const MultiChannelImage& pair : dataset) {
    if (pair.height() < config.crop || pair.width() < config.crop) {
      throw std::invalid_argument("train_fusion: crop " + std::to_string(config.crop) + " exceeds a " +
                                  std::to_string(pair.height()) + "x" + std::to_string(pair.width()) + " pair");
    }
  }

  FusionTrainResult result{FusionHead::initialize(config.model, denoiser.config().expansive_widths(), rng.next_u64()),
                           {},
                           {}};
  FusionHead& head = result.head;
  AdamState adam(head.parameters().tensors(), AdamOptions{config.learning_rate});

  // With whole-image crops the features of each pair never change, so compute them once.
  std::vector<std::array<DiffusionFeatureStack, kFeatureTimesteps>> cached;
  const bool whole_image = std::all_of(dataset.begin(), dataset.end(), [&](const MultiChannelImage& p) {
    return p.height() == config.crop && p.width() == config.crop;
  });
  if (whole_image) {
    cached.reserve(dataset.size());
    for (const MultiChannelImage& pair : dataset) cached.push_back(fusion_features(pair, denoiser, config.model));
  }

  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : (n + config.batch_size - 1) / config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_total = 0.0;
    std::size_t epoch_items = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Tape tape;
      const auto vars = head.parameters().bind(tape, true);
      Var batch_loss;
      std::size_t items = 0;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        if (cursor == n) {
          if (b > 0 && config.steps_per_epoch == 0) break;  // one pass per epoch: short final batch
          std::shuffle(order.begin(), order.end(), std::mt19937_64(rng.next_u64()));
          cursor = 0;
        }
        const std::size_t index = order[cursor++];
        const MultiChannelImage* pair = &dataset[index];
        std::array<DiffusionFeatureStack, kFeatureTimesteps> stacks;
        MultiChannelImage cropped;
        if (whole_image) {
          stacks = cached[index];
        } else {
          const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pair->height() - config.crop)));
          const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pair->width() - config.crop)));
          cropped = MultiChannelImage(crop(pair->tensor(), y0, x0, config.crop, config.crop));
          pair = &cropped;
          stacks = fusion_features(cropped, denoiser, config.model);
        }
        FusionHead::TapedStacks taped;
        for (std::size_t t = 0; t < kFeatureTimesteps; ++t)
          for (std::size_t k = 0; k < kUnetStages; ++k) taped[t][k] = tape.constant(std::move(stacks[t].maps[k]));
        Var fused = head.head(vars, head.aggregate(vars, taped));
        Var loss = loss_fusion(tape, fused, pair->infrared(), pair->visible(), config.gradient_form);
        batch_loss = batch_loss.valid() ? ad::add(batch_loss, loss) : loss;
        ++items;
      }
      Var mean_loss = ad::affine(batch_loss, 1.0 / static_cast<double>(items));
      Gradients grads = tape.backward(mean_loss);
      std::vector<Tensor> grad_list;
      grad_list.reserve(vars.size());
      for (Var v : vars) grad_list.push_back(grads[v]);
      adam.apply(head.parameters().tensors(), grad_list);

      const double value = mean_loss.value().item();
      result.step_losses.push_back(value);
      epoch_total += value * static_cast<double>(items);
      epoch_items += items;
      if (progress) progress(step, value);
      ++step;
    }
    result.epoch_losses.push_back(epoch_total / static_cast<double>(epoch_items));
  }
  return result;
}

}  // namespace dfusion
