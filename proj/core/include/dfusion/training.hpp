#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dfusion/denoiser.hpp"
#include "dfusion/diffusion.hpp"
#include "dfusion/rng.hpp"

namespace dfusion {

struct DiffusionTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  double learning_rate = 1e-4;
  ResidualNorm norm = ResidualNorm::kL2;

  void validate() const;
};

struct DiffusionTrainResult {
  Denoiser denoiser;
  std::vector<double> step_losses;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Adam on L_diff. `dataset` holds [0, 1] pairs; every step draws a batch with
/// replacement and the timesteps and noise of diffusion_loss from `rng`.
DiffusionTrainResult train_diffusion(std::span<const MultiChannelImage> dataset, Denoiser denoiser,
                                     const DiffusionTrainConfig& config, Rng& rng, const StepCallback& progress = {});

/// Mean of the last `window` entries (all of them if fewer).
double tail_mean(std::span<const double> values, std::size_t window);
/// Mean of the first `window` entries (all of them if fewer).
double head_mean(std::span<const double> values, std::size_t window);

}  // namespace dfusion
