#include "dfusion/training.hpp"

#include <numeric>
#include <stdexcept>

#include "dfusion/adam.hpp"

namespace dfusion {

void DiffusionTrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("DiffusionTrainConfig: steps must be positive");
  if (batch_size == 0) throw std::invalid_argument("DiffusionTrainConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("DiffusionTrainConfig: learning_rate must be positive");
}

DiffusionTrainResult train_diffusion(std::span<const MultiChannelImage> dataset, Denoiser denoiser,
                                     const DiffusionTrainConfig& config, Rng& rng, const StepCallback& progress) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
  std::vector<MultiChannelImage> scaled;
  scaled.reserve(dataset.size());
  for (const MultiChannelImage& image : dataset) {
    require_unet_size(image.height(), image.width());
    scaled.push_back(image.to_diffusion_range());
  }

  AdamState adam(denoiser.parameters().tensors(), AdamOptions{.learning_rate = config.learning_rate});
  DiffusionTrainResult result{denoiser, {}};
  result.step_losses.reserve(config.steps);
  std::vector<MultiChannelImage> batch(config.batch_size);
  const auto last = static_cast<std::int64_t>(scaled.size()) - 1;

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& item : batch) item = scaled[static_cast<std::size_t>(rng.uniform_int(0, last))];
    Tape tape;
    const auto params = result.denoiser.parameters().bind(tape, true);
    const DiffusionLoss loss =
        diffusion_loss(tape, batch, result.denoiser.taped_predictor(params), result.denoiser.schedule(), rng,
                       config.norm);
    const Gradients grads = tape.backward(loss.loss);
    std::vector<Tensor> grad_list;
    grad_list.reserve(params.size());
    for (const Var& p : params) grad_list.push_back(grads[p]);
    adam.apply(result.denoiser.parameters().tensors(), grad_list);

    const double value = loss.loss.value().item();
    result.step_losses.push_back(value);
    if (progress) progress(step, value);
  }
  return result;
}

double tail_mean(std::span<const double> values, std::size_t window) {
  if (values.empty()) throw std::invalid_argument("tail_mean: empty sequence");
  const std::size_t n = std::min(window, values.size());
  return std::accumulate(values.end() - static_cast<std::ptrdiff_t>(n), values.end(), 0.0) / static_cast<double>(n);
}

double head_mean(std::span<const double> values, std::size_t window) {
  if (values.empty()) throw std::invalid_argument("head_mean: empty sequence");
  const std::size_t n = std::min(window, values.size());
  return std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
         static_cast<double>(n);
}

}  // namespace dfusion
