#include "dfusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dfusion/errors.hpp"

namespace dfusion {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("NoiseSchedule: at least one timestep required");
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("NoiseSchedule: beta must lie in (0, 1), got " + std::to_string(b));
  }
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  const std::size_t n = s.beta_.size();
  s.alpha_.resize(n);
  s.alpha_bar_.resize(n);
  s.sigma2_.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alpha_[i] = 1.0 - s.beta_[i];
    const double previous = running;
    running = s.alpha_[i] * previous;
    s.alpha_bar_[i] = running;
    s.sigma2_[i] = (1.0 - previous) / (1.0 - running) * s.beta_[i];
  }
  return s;
}

void NoiseSchedule::require_timestep(int t) const {
  if (t < 1 || t > steps()) {
    throw std::invalid_argument("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

std::size_t NoiseSchedule::index(int t) const {
  require_timestep(t);
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("make_linear_schedule: steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("make_linear_schedule: require 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

MultiChannelImage::MultiChannelImage(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3 || pixels_.channels() != kChannels) {
    throw std::invalid_argument("MultiChannelImage: expected H x W x 4, got " + shape_string(pixels_.dims()));
  }
  require_finite(pixels_, "MultiChannelImage");
}

MultiChannelImage MultiChannelImage::from_sources(const Tensor& visible, const Tensor& infrared) {
  if (visible.rank() != 3 || visible.channels() != 3) {
    throw std::invalid_argument("MultiChannelImage: visible image must be H x W x 3, got " + shape_string(visible.dims()));
  }
  if (infrared.rank() != 3 || infrared.channels() != 1) {
    throw std::invalid_argument("MultiChannelImage: infrared image must be H x W x 1, got " +
                                shape_string(infrared.dims()));
  }
  return MultiChannelImage(concat_channels(visible, infrared));
}

MultiChannelImage MultiChannelImage::to_diffusion_range() const {
  Tensor t = pixels_;
  for (double& v : t.data()) v = 2.0 * v - 1.0;
  return MultiChannelImage(std::move(t));
}

MultiChannelImage MultiChannelImage::to_unit_range() const {
  Tensor t = pixels_;
  for (double& v : t.data()) v = 0.5 * (v + 1.0);
  return MultiChannelImage(std::move(t));
}

DiffusionSample q_sample(const MultiChannelImage& clean, int t, const Tensor& noise, const NoiseSchedule& schedule) {
  schedule.require_timestep(t);
  if (!noise.same_shape(clean.tensor())) {
    throw std::invalid_argument("q_sample: noise shape " + shape_string(noise.dims()) + " vs image " +
                                shape_string(clean.tensor().dims()));
  }
  const double signal = std::sqrt(schedule.alpha_bar(t));
  const double spread = std::sqrt(1.0 - schedule.alpha_bar(t));
  Tensor out = clean.tensor();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * out[i] + spread * noise[i];
  return DiffusionSample{MultiChannelImage(std::move(out)), t, noise};
}

MultiChannelImage forward_step(const MultiChannelImage& previous, int t, const NoiseSchedule& schedule, Rng& rng) {
  schedule.require_timestep(t);
  const double keep = std::sqrt(schedule.alpha(t));
  const double spread = std::sqrt(1.0 - schedule.alpha(t));
  Tensor out = previous.tensor();
  for (double& v : out.data()) v = keep * v + spread * rng.normal();
  return MultiChannelImage(std::move(out));
}

PosteriorStats posterior_stats(const Tensor& noisy, const Tensor& predicted_noise, int t, const NoiseSchedule& schedule) {
  schedule.require_timestep(t);
  if (!noisy.same_shape(predicted_noise)) {
    throw std::invalid_argument("posterior_stats: prediction shape " + shape_string(predicted_noise.dims()) +
                                " vs image " + shape_string(noisy.dims()));
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double noise_coeff = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  Tensor mean = noisy;
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = inv_sqrt_alpha * (noisy[i] - noise_coeff * predicted_noise[i]);
  return PosteriorStats{std::move(mean), schedule.sigma2(t)};
}

MultiChannelImage reverse_step(const MultiChannelImage& noisy, int t, const NoisePredictor& predictor,
                               const NoiseSchedule& schedule, const Tensor& z) {
  schedule.require_timestep(t);
  if (!predictor) throw StateError("reverse_step: no noise predictor loaded");
  if (!z.same_shape(noisy.tensor())) throw std::invalid_argument("reverse_step: z shape mismatch");
  PosteriorStats stats = posterior_stats(noisy.tensor(), predictor(noisy.tensor(), t), t, schedule);
  if (t > 1) {
    const double sigma = std::sqrt(stats.variance);
    for (std::size_t i = 0; i < stats.mean.size(); ++i) stats.mean[i] += sigma * z[i];
  }
  return MultiChannelImage(std::move(stats.mean));
}

DiffusionLoss diffusion_loss(Tape& tape, std::span<const MultiChannelImage> batch, const TapedNoisePredictor& predictor,
                             const NoiseSchedule& schedule, Rng& rng, ResidualNorm norm) {
  if (batch.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
  if (!predictor) throw StateError("diffusion_loss: no noise predictor loaded");
  const std::uint64_t batch_seed = rng.next_u64();

  DiffusionLoss out;
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng item_rng = Rng(batch_seed).derive(i);
    const int t = static_cast<int>(item_rng.uniform_int(1, schedule.steps()));
    Tensor gamma = item_rng.normal_tensor(batch[i].tensor().dims());
    DiffusionSample sample = q_sample(batch[i], t, gamma, schedule);

    Var prediction = predictor(tape, tape.constant(sample.image.tensor()), t);
    Var residual = ad::sub(tape.constant(gamma), prediction);
    Var sq = ad::sum(ad::square(residual));
    Var item_loss = norm == ResidualNorm::kL2 ? ad::sqrt_scalar(sq) : sq;
    total = total.valid() ? ad::add(total, item_loss) : item_loss;
    out.samples.push_back(std::move(sample));
  }
  out.loss = ad::affine(total, 1.0 / static_cast<double>(batch.size()));
  return out;
}

SampledPair sample_pair(const NoisePredictor& predictor, const NoiseSchedule& schedule, std::size_t height,
                        std::size_t width, Rng& rng) {
  if (!predictor) throw StateError("sample_pair: no denoiser checkpoint loaded");
  if (schedule.empty()) throw StateError("sample_pair: empty noise schedule");
  if (height < 1 || width < 1) throw std::invalid_argument("sample_pair: size must be positive");
  const std::vector<std::size_t> dims{height, width, MultiChannelImage::kChannels};

  MultiChannelImage current(rng.normal_tensor(dims));
  for (int t = schedule.steps(); t >= 1; --t) {
    Tensor z = t > 1 ? rng.normal_tensor(dims) : Tensor(dims);
    current = reverse_step(current, t, predictor, schedule, z);
  }

  Tensor unit = current.tensor();
  for (double& v : unit.data()) v = 0.5 * (std::clamp(v, -1.0, 1.0) + 1.0);
  SampledPair pair{current, slice_channels(unit, 0, 3), slice_channels(unit, 3, 1)};
  return pair;
}

}  // namespace dfusion
