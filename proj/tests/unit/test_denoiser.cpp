#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "dfusion/denoiser.hpp"
#include "dfusion/errors.hpp"
#include "oracles.hpp"

using namespace dfusion;

namespace {

Denoiser small_net(bool zero_head, std::uint64_t seed = 3) {
  return Denoiser::initialize(DenoiserConfig{4, 8}, make_linear_schedule(200, 1e-4, 0.02), seed,
                              Denoiser::InitOptions{zero_head});
}

MultiChannelImage noisy_input(std::uint64_t seed, std::size_t h = 16, std::size_t w = 16) {
  Rng rng(seed);
  return MultiChannelImage(rng.normal_tensor({h, w, 4}));
}

}  // namespace

TEST(TimestepEmbed, SinCosPairs) {
  const Tensor e0 = timestep_embed(0, 6);
  EXPECT_EQ(e0, Tensor({6}, std::vector<double>{0, 1, 0, 1, 0, 1}));
  const Tensor e = timestep_embed(7, 4);
  EXPECT_NEAR(e[0], std::sin(7.0), 1e-15);
  EXPECT_NEAR(e[1], std::cos(7.0), 1e-15);
  EXPECT_NEAR(e[2], std::sin(7.0 / 100.0), 1e-15);
  EXPECT_NEAR(e[3], std::cos(7.0 / 100.0), 1e-15);
  EXPECT_THROW(timestep_embed(1, 3), std::invalid_argument);
  EXPECT_THROW(timestep_embed(-1, 4), std::invalid_argument);
}

TEST(Denoiser, OutputShapeAndZeroHead) {
  const Denoiser net = small_net(true);
  const Tensor eps = net.predict_noise(noisy_input(1), 50);
  ASSERT_EQ(eps.dims(), (std::vector<std::size_t>{16, 16, 4}));
  for (double v : eps.data()) EXPECT_EQ(v, 0.0);
}

TEST(Denoiser, FeatureStackShapes) {
  const Denoiser net = Denoiser::initialize(DenoiserConfig{4, 8}, make_linear_schedule(20, 1e-4, 0.02), 1);
  const DiffusionFeatureStack f = net.extract_features(noisy_input(2, 32, 48), 5);
  EXPECT_EQ(f.timestep, 5);
  const auto widths = DenoiserConfig{4, 8}.expansive_widths();
  for (std::size_t i = 0; i < kUnetStages; ++i) {
    const std::size_t scale = std::size_t{16} >> i;
    EXPECT_EQ(f.maps[i].dims(), (std::vector<std::size_t>{32 / scale, 48 / scale, widths[i]})) << "stage " << i;
  }
}

TEST(Denoiser, PredictionDependsOnTimestep) {
  const Denoiser net = small_net(false);
  const MultiChannelImage x = noisy_input(3);
  EXPECT_GT(max_abs_difference(net.predict_noise(x, 5), net.predict_noise(x, 100)), 1e-6);
  EXPECT_EQ(net.predict_noise(x, 5), net.predict_noise(x, 5));
}

TEST(Denoiser, RejectsBadInputs) {
  const Denoiser net = small_net(true);
  EXPECT_THROW(net.predict_noise(noisy_input(4, 24, 16), 5), std::invalid_argument);
  EXPECT_THROW(net.predict_noise(noisy_input(4), 0), std::invalid_argument);
  EXPECT_THROW(net.predict_noise(noisy_input(4), 201), std::invalid_argument);
  EXPECT_THROW(DenoiserConfig({2, 8}).validate(), std::invalid_argument);
}

TEST(Denoiser, EveryParameterReceivesGradient) {
  const Denoiser net = small_net(false);
  Tape tape;
  const auto params = net.parameters().bind(tape, true);
  const auto out = net.forward(tape, params, tape.constant(noisy_input(5).tensor()), 30);
  const Gradients g = tape.backward(ad::sum(ad::square(out.noise)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double norm = 0.0;
    for (double v : g[params[i]].data()) norm += v * v;
    EXPECT_GT(norm, 0.0) << net.parameters().names()[i];
  }
}

TEST(Denoiser, SmallNetworkGradientMatchesFiniteDifferences) {
  // Spot-check a few tensors here; the acceptance run covers every parameter.
  Denoiser net = small_net(false);
  const MultiChannelImage x = noisy_input(6);
  auto loss = [&] {
    Tape tape;
    const auto params = net.parameters().bind(tape, false);
    return ad::sum(ad::square(net.forward(tape, params, tape.constant(x.tensor()), 40).noise)).value().item();
  };
  Tape tape;
  const auto params = net.parameters().bind(tape, true);
  const Gradients g = tape.backward(ad::sum(ad::square(net.forward(tape, params, tape.constant(x.tensor()), 40).noise)));
  for (const char* name : {"contract.0.bias", "expand.4.time", "head.kernel"}) {
    const std::size_t i = net.parameters().index_of(name);
    const Tensor numeric = oracle::numeric_gradient(loss, &net.parameters().tensors()[i]);
    EXPECT_LT(oracle::relative_error(g[params[i]], numeric), 1e-6) << name;
  }
}

TEST(Denoiser, CheckpointRoundTrip) {
  const Denoiser net = small_net(false, 11);
  const Checkpoint ckpt = net.to_checkpoint();
  const auto bytes = ckpt.encode();
  const Denoiser back = Denoiser::from_checkpoint(Checkpoint::decode(bytes));
  EXPECT_EQ(back.to_checkpoint().encode(), bytes);
  EXPECT_EQ(back.config(), net.config());
  EXPECT_EQ(back.schedule().steps(), 200);
  // Parameters survive up to float32 rounding.
  const MultiChannelImage x = noisy_input(7);
  EXPECT_LT(max_abs_difference(back.predict_noise(x, 9), net.predict_noise(x, 9)), 1e-4);

  Checkpoint wrong;
  wrong.add("meta.kind", Tensor::scalar(2.0));
  EXPECT_THROW(Denoiser::from_checkpoint(wrong), StateError);
}
