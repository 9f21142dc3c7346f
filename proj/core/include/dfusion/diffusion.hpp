#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dfusion/autodiff.hpp"
#include "dfusion/rng.hpp"
#include "dfusion/tensor.hpp"

namespace dfusion {

/// Per-timestep variance coefficients, indexed 1..T. The convention
/// alpha_bar(0) = 1 makes sigma2(1) = 0.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Builds the derived coefficients from beta_1..beta_T; each beta must lie in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  bool empty() const noexcept { return beta_.empty(); }

  double beta(int t) const { return beta_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  /// Accepts t = 0 (returns 1).
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(index(t)); }
  double sigma2(int t) const { return sigma2_.at(index(t)); }

  const std::vector<double>& betas() const noexcept { return beta_; }

  void require_timestep(int t) const;

 private:
  std::size_t index(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma2_;
};

/// beta_t linearly interpolated from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// H x W x 4 image, channels ordered R, G, B, IR.
class MultiChannelImage {
 public:
  static constexpr std::size_t kChannels = 4;

  MultiChannelImage() = default;
  explicit MultiChannelImage(Tensor pixels);
  /// Concatenates an H x W x 3 visible image with an H x W x 1 infrared image.
  static MultiChannelImage from_sources(const Tensor& visible, const Tensor& infrared);

  const Tensor& tensor() const noexcept { return pixels_; }
  std::size_t height() const { return pixels_.height(); }
  std::size_t width() const { return pixels_.width(); }

  Tensor visible() const { return slice_channels(pixels_, 0, 3); }
  Tensor infrared() const { return slice_channels(pixels_, 3, 1); }

  /// [0, 1] storage range to [-1, 1] diffusion range, and back.
  MultiChannelImage to_diffusion_range() const;
  MultiChannelImage to_unit_range() const;

 private:
  Tensor pixels_;
};

struct DiffusionSample {
  MultiChannelImage image;
  int timestep = 0;
  Tensor noise;
};

/// Closed-form corruption: sqrt(alpha_bar_t) * I0 + sqrt(1 - alpha_bar_t) * noise.
DiffusionSample q_sample(const MultiChannelImage& clean, int t, const Tensor& noise, const NoiseSchedule& schedule);

/// One Markov step sqrt(alpha_t) * I_{t-1} + sqrt(1 - alpha_t) * fresh noise.
MultiChannelImage forward_step(const MultiChannelImage& previous, int t, const NoiseSchedule& schedule, Rng& rng);

struct PosteriorStats {
  Tensor mean;
  double variance = 0.0;
};

/// Mean of the reverse conditional given a noise prediction, and its variance sigma_t^2.
PosteriorStats posterior_stats(const Tensor& noisy, const Tensor& predicted_noise, int t, const NoiseSchedule& schedule);

/// Noise prediction network evaluated without gradients.
using NoisePredictor = std::function<Tensor(const Tensor& noisy, int t)>;
/// Noise prediction network recorded on a tape.
using TapedNoisePredictor = std::function<Var(Tape& tape, Var noisy, int t)>;

/// I_{t-1} = mu(I_t, t) + sigma_t * z, with z ignored at t = 1.
MultiChannelImage reverse_step(const MultiChannelImage& noisy, int t, const NoisePredictor& predictor,
                               const NoiseSchedule& schedule, const Tensor& z);

/// Per-item norm of the noise residual.
enum class ResidualNorm {
  kL2,         // ||gamma - eps||_2, the loss as written
  kSquaredL2,  // ||gamma - eps||_2^2, the usual DDPM objective
};

struct DiffusionLoss {
  Var loss;
  std::vector<DiffusionSample> samples;
};

/// Draws t ~ U{1..T} and gamma ~ N(0, I) per batch item (from per-item derived
/// generators) and records the mean residual norm on `tape`.
DiffusionLoss diffusion_loss(Tape& tape, std::span<const MultiChannelImage> batch, const TapedNoisePredictor& predictor,
                             const NoiseSchedule& schedule, Rng& rng, ResidualNorm norm = ResidualNorm::kL2);

struct SampledPair {
  MultiChannelImage raw;  // final I_0 in diffusion space, unclamped
  Tensor visible;         // H x W x 3 in [0, 1]
  Tensor infrared;        // H x W x 1 in [0, 1]
};

/// Ancestral sampling from pure noise at t = T down to t = 1.
SampledPair sample_pair(const NoisePredictor& predictor, const NoiseSchedule& schedule, std::size_t height,
                        std::size_t width, Rng& rng);

}  // namespace dfusion
