#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "ciede2000_pairs.hpp"
#include "dfusion/color.hpp"

using namespace dfusion;
using oracle::kCiede2000Pairs;
using oracle::VerificationPair;

TEST(Ciede2000, VerificationPairs) {
  for (std::size_t i = 0; i < kCiede2000Pairs.size(); ++i) {
    const VerificationPair& p = kCiede2000Pairs[i];
    EXPECT_NEAR(ciede2000(p.first, p.second), p.delta_e, 1e-4) << "pair " << i + 1;
    EXPECT_NEAR(ciede2000(p.second, p.first), p.delta_e, 1e-4) << "pair " << i + 1 << " swapped";
  }
}

TEST(Ciede2000, IdentityAndLightnessOnly) {
  EXPECT_EQ(ciede2000({40, 10, -5}, {40, 10, -5}), 0.0);
  // Neutral colours differ only in lightness: dE = dL / S_L with
  // S_L = 1 + 0.015 (Lbar - 50)^2 / sqrt(20 + (Lbar - 50)^2).
  const double lbar = 55.0, d = (lbar - 50.0) * (lbar - 50.0);
  const double sl = 1.0 + 0.015 * d / std::sqrt(20.0 + d);
  EXPECT_NEAR(ciede2000({50, 0, 0}, {60, 0, 0}), 10.0 / sl, 1e-12);
  EXPECT_NEAR(ciede2000({50, 0, 0}, {60, 0, 0}, {2.0, 1.0, 1.0}), 5.0 / sl, 1e-12);
}

TEST(Srgb, TransferFunctionRoundTrip) {
  for (double v = 0.0; v <= 1.0; v += 0.01) EXPECT_NEAR(linear_to_srgb(srgb_to_linear(v)), v, 1e-12);
  EXPECT_NEAR(srgb_to_linear(0.04045), 0.04045 / 12.92, 1e-15);
  EXPECT_NEAR(srgb_to_linear(1.0), 1.0, 1e-15);
}

TEST(Srgb, LabOfReferenceColours) {
  const Lab white = srgb_to_lab({1, 1, 1});
  EXPECT_NEAR(white.l, 100.0, 1e-9);
  EXPECT_NEAR(white.a, 0.0, 1e-9);
  EXPECT_NEAR(white.b, 0.0, 1e-9);
  const Lab black = srgb_to_lab({0, 0, 0});
  EXPECT_NEAR(black.l, 0.0, 1e-12);
  // Pure sRGB red, well-known coordinates L 53.24, a 80.09, b 67.20.
  const Lab red = srgb_to_lab({1, 0, 0});
  EXPECT_NEAR(red.l, 53.24, 0.01);
  EXPECT_NEAR(red.a, 80.09, 0.02);
  EXPECT_NEAR(red.b, 67.20, 0.02);
  // Any gray has a = b = 0.
  const Lab gray = srgb_to_lab({0.4, 0.4, 0.4});
  EXPECT_NEAR(gray.a, 0.0, 1e-9);
  EXPECT_NEAR(gray.b, 0.0, 1e-9);
}

TEST(Srgb, LabRoundTrip) {
  for (double r : {0.0, 0.2, 0.7, 1.0})
    for (double g : {0.05, 0.5, 0.9})
      for (double b : {0.0, 0.33, 1.0}) {
        const auto back = lab_to_srgb(srgb_to_lab({r, g, b}));
        EXPECT_NEAR(back[0], r, 1e-9);
        EXPECT_NEAR(back[1], g, 1e-9);
        EXPECT_NEAR(back[2], b, 1e-9);
      }
}
