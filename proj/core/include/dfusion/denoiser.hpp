#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dfusion/autodiff.hpp"
#include "dfusion/checkpoint.hpp"
#include "dfusion/diffusion.hpp"
#include "dfusion/parameters.hpp"

namespace dfusion {

inline constexpr std::size_t kUnetStages = 5;

struct DenoiserConfig {
  std::size_t base_width = 16;
  std::size_t embed_dim = 64;

  /// Throws std::invalid_argument unless base_width >= 4 and embed_dim is positive and even.
  void validate() const;
  /// Output channels of the five expansive stages, coarsest first.
  std::array<std::size_t, kUnetStages> expansive_widths() const;

  bool operator==(const DenoiserConfig&) const = default;
};

/// Post-activation outputs of the five expansive stages at one timestep,
/// spatial sizes H/16, H/8, H/4, H/2, H.
struct DiffusionFeatureStack {
  int timestep = 0;
  std::array<Tensor, kUnetStages> maps;
};

/// Sinusoidal embedding: entries 2k and 2k+1 are sin and cos of t / 10000^(2k/dim).
Tensor timestep_embed(int t, std::size_t dim);

/// Requires H and W divisible by 16.
void require_unet_size(std::size_t height, std::size_t width);

struct DenoiserInitOptions {
  /// Zero head means the untrained network predicts zero noise.
  bool zero_head = true;
};

/// Noise-prediction U-Net: five 3x3 contracting convolutions (stride 2 after the
/// first), five expansive convolutions (bilinear upsample, skip concat, conv) and
/// a single-convolution diffusion head. Every stage adds a learned projection of
/// the timestep embedding as a per-channel bias before Leaky ReLU.
class Denoiser {
 public:
  using InitOptions = DenoiserInitOptions;

  struct TapedOutput {
    Var noise;
    std::array<Var, kUnetStages> features;
  };

  struct Pass {
    Tensor noise;
    DiffusionFeatureStack features;
  };

  Denoiser(DenoiserConfig config, NoiseSchedule schedule, ParameterSet params);

  static Denoiser initialize(const DenoiserConfig& config, NoiseSchedule schedule, std::uint64_t seed,
                             InitOptions options = {});
  static std::vector<ParameterSpec> layout(const DenoiserConfig& config, InitOptions options = {});

  const DenoiserConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }

  Tensor predict_noise(const MultiChannelImage& noisy, int t) const;
  DiffusionFeatureStack extract_features(const MultiChannelImage& noisy, int t) const;
  /// One forward pass yielding both the noise prediction and the feature stack.
  Pass run(const MultiChannelImage& noisy, int t) const;

  /// Records the forward pass on `tape`; `params` come from parameters().bind().
  TapedOutput forward(Tape& tape, std::span<const Var> params, Var noisy, int t) const;

  NoisePredictor predictor() const;
  TapedNoisePredictor taped_predictor(std::vector<Var> params) const;

  Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const Checkpoint& checkpoint);

 private:
  DenoiserConfig config_;
  NoiseSchedule schedule_;
  ParameterSet params_;
};

}  // namespace dfusion
