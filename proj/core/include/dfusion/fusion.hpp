#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dfusion/adam.hpp"
#include "dfusion/autodiff.hpp"
#include "dfusion/checkpoint.hpp"
#include "dfusion/denoiser.hpp"
#include "dfusion/diffusion.hpp"
#include "dfusion/parameters.hpp"

namespace dfusion {

inline constexpr std::size_t kFeatureTimesteps = 3;

/// H x W x 3 fused image (R, G, B) in [0, 1].
class FusedImage {
 public:
  FusedImage() = default;
  explicit FusedImage(Tensor pixels);

  const Tensor& tensor() const noexcept { return pixels_; }
  std::size_t height() const { return pixels_.height(); }
  std::size_t width() const { return pixels_.width(); }

 private:
  Tensor pixels_;
};

enum class GradientLossForm {
  /// || |grad I_f^i| - max(|grad I_ir|, |grad I_vis^i|) ||_1
  kMagnitude,
  /// Signed Sobel response (Gx + Gy) of the fused channel against the same maximum.
  kLiteral,
};

struct FusionConfig {
  std::array<int, kFeatureTimesteps> timesteps{5, 50, 100};
  std::size_t feature_width = 32;  // common width after the 1x1 stage projections
  std::size_t hidden_width = 32;
  /// false selects the ablation: features of the clean image at t = 1, no diffusion noise.
  bool use_diffusion_features = true;
  /// Seed of the noise used to corrupt inputs before feature extraction.
  std::uint64_t noise_seed = 0;

  void validate(const NoiseSchedule& schedule) const;
};

struct FusionTrainConfig {
  FusionConfig model;
  std::size_t crop = 160;
  std::size_t batch_size = 24;
  std::size_t epochs = 300;
  /// 0 means ceil(dataset size / batch size), i.e. one pass per epoch.
  std::size_t steps_per_epoch = 0;
  double learning_rate = 1e-4;
  GradientLossForm gradient_form = GradientLossForm::kMagnitude;

  void validate(const NoiseSchedule& schedule) const;
};

/// Learned 1x1 stage projections plus the 3x3 convolutional fusion head.
class FusionHead {
 public:
  using StageWidths = std::array<std::size_t, kUnetStages>;
  using TapedStacks = std::array<std::array<Var, kUnetStages>, kFeatureTimesteps>;

  FusionHead(FusionConfig config, StageWidths stage_widths, ParameterSet params);

  static FusionHead initialize(const FusionConfig& config, const StageWidths& stage_widths, std::uint64_t seed);
  static std::vector<ParameterSpec> layout(const FusionConfig& config, const StageWidths& stage_widths);

  const FusionConfig& config() const noexcept { return config_; }
  FusionConfig& config() noexcept { return config_; }
  const StageWidths& stage_widths() const noexcept { return stage_widths_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }

  /// Per timestep: resample each stage map to H x W, project to the common width,
  /// add the five stages. The three per-timestep sums are concatenated by channel.
  Var aggregate(std::span<const Var> params, const TapedStacks& stacks) const;
  /// conv3x3 -> LeakyReLU -> conv3x3 -> LeakyReLU -> conv3x3 -> tanh, mapped to [0, 1].
  Var head(std::span<const Var> params, Var features) const;

  Tensor aggregate_features(const std::array<DiffusionFeatureStack, kFeatureTimesteps>& stacks) const;
  FusedImage fusion_head(const Tensor& features) const;

  Checkpoint to_checkpoint() const;
  static FusionHead from_checkpoint(const Checkpoint& checkpoint);

 private:
  void require_stacks(const TapedStacks& stacks) const;

  FusionConfig config_;
  StageWidths stage_widths_;
  ParameterSet params_;
};

/// |Gx| + |Gy| from 3x3 Sobel kernels with zero padding. Accepts H x W or H x W x 1.
Tensor sobel_gradient(const Tensor& channel);

/// Channel maps used by the losses. `fused` and `visible` are H x W x 3, `infrared` H x W x 1.
Var loss_mcg(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible,
             GradientLossForm form = GradientLossForm::kMagnitude);
Var loss_mci(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible);
Var loss_fusion(Tape& tape, Var fused, const Tensor& infrared, const Tensor& visible,
                GradientLossForm form = GradientLossForm::kMagnitude);

double loss_mcg(const Tensor& fused, const Tensor& infrared, const Tensor& visible,
                GradientLossForm form = GradientLossForm::kMagnitude);
double loss_mci(const Tensor& fused, const Tensor& infrared, const Tensor& visible);
double loss_fusion(const Tensor& fused, const Tensor& infrared, const Tensor& visible,
                   GradientLossForm form = GradientLossForm::kMagnitude);

/// Feature stacks for one [0, 1] pair (H, W divisible by 16), following config.use_diffusion_features.
std::array<DiffusionFeatureStack, kFeatureTimesteps> fusion_features(const MultiChannelImage& pair,
                                                                     const Denoiser& denoiser,
                                                                     const FusionConfig& config);

/// End-to-end fusion of a [0, 1] pair. Sizes not divisible by 16 are reflect-padded and cropped back.
FusedImage fuse(const MultiChannelImage& pair, const Denoiser* denoiser, const FusionHead* head,
                const FusionConfig& config);

struct FusionTrainResult {
  FusionHead head;
  std::vector<double> epoch_losses;
  std::vector<double> step_losses;
};

using TrainProgress = std::function<void(std::size_t step, double loss)>;

/// Adam on L_f over random crops; the denoiser is only read.
FusionTrainResult train_fusion(std::span<const MultiChannelImage> dataset, const Denoiser& denoiser,
                               const FusionTrainConfig& config, Rng& rng, const TrainProgress& progress = {});

}  // namespace dfusion
