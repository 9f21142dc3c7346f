#include <gtest/gtest.h>

#include <stdexcept>
#include <vector>

#include "dfusion/synthetic.hpp"
#include "dfusion/training.hpp"

using namespace dfusion;

namespace {

std::vector<MultiChannelImage> tiny_dataset(std::size_t count) {
  std::vector<MultiChannelImage> out;
  for (const SyntheticPair& p : synthesize_dataset(count, 16, 16, 5)) out.push_back(p.image());
  return out;
}

Denoiser tiny_net() {
  return Denoiser::initialize(DenoiserConfig{4, 8}, make_linear_schedule(200, 1e-4, 0.02), 2);
}

}  // namespace

TEST(WindowMeans, HeadAndTail) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(head_mean(v, 2), 1.5);
  EXPECT_DOUBLE_EQ(tail_mean(v, 2), 4.5);
  EXPECT_DOUBLE_EQ(tail_mean(v, 100), 3.0);
  EXPECT_THROW(head_mean(std::vector<double>{}, 3), std::invalid_argument);
}

TEST(TrainDiffusion, FixedSeedReproducesCurveAndWeights) {
  const auto data = tiny_dataset(3);
  DiffusionTrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  Rng a(8), b(8);
  const DiffusionTrainResult ra = train_diffusion(data, tiny_net(), cfg, a);
  const DiffusionTrainResult rb = train_diffusion(data, tiny_net(), cfg, b);
  EXPECT_EQ(ra.step_losses, rb.step_losses);
  ASSERT_EQ(ra.step_losses.size(), 5u);
  for (std::size_t i = 0; i < ra.denoiser.parameters().size(); ++i)
    EXPECT_EQ(ra.denoiser.parameters().tensors()[i], rb.denoiser.parameters().tensors()[i]);
  Rng c(9);
  EXPECT_NE(train_diffusion(data, tiny_net(), cfg, c).step_losses, ra.step_losses);
}

TEST(TrainDiffusion, ProgressAndInputUntouched) {
  const auto data = tiny_dataset(2);
  const auto copy = data;
  const Denoiser net = tiny_net();
  DiffusionTrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 1;
  std::vector<std::size_t> seen;
  Rng rng(1);
  const auto result = train_diffusion(data, net, cfg, rng, [&](std::size_t step, double) { seen.push_back(step); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2}));
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(data[i].tensor(), copy[i].tensor());
  // The network passed in is copied, not trained in place.
  EXPECT_NE(result.denoiser.parameters().tensors().back(), Tensor(net.parameters().tensors().back().dims()));
  EXPECT_EQ(net.parameters().tensors().back(), Tensor(net.parameters().tensors().back().dims()));
}

TEST(TrainDiffusion, LossDropsOnSingleImage) {
  const auto data = tiny_dataset(1);
  DiffusionTrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 4;
  cfg.learning_rate = 2e-3;
  Rng rng(4);
  const auto losses = train_diffusion(data, tiny_net(), cfg, rng).step_losses;
  EXPECT_LT(tail_mean(losses, 40), 0.8 * head_mean(losses, 40));
}

TEST(TrainDiffusion, RejectsBadInput) {
  const auto data = tiny_dataset(1);
  Rng rng(1);
  DiffusionTrainConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(train_diffusion(data, tiny_net(), cfg, rng), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(train_diffusion(data, tiny_net(), cfg, rng), std::invalid_argument);
  EXPECT_THROW(train_diffusion({}, tiny_net(), DiffusionTrainConfig{}, rng), std::invalid_argument);
  const std::vector<MultiChannelImage> odd{MultiChannelImage(Tensor({12, 16, 4}))};
  EXPECT_THROW(train_diffusion(odd, tiny_net(), DiffusionTrainConfig{}, rng), std::invalid_argument);
}
