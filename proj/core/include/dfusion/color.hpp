#pragma once

#include <array>

namespace dfusion {

/// CIELAB coordinates relative to the D65 white point.
struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// IEC 61966-2-1 transfer function and its inverse, on [0, 1].
double srgb_to_linear(double encoded);
double linear_to_srgb(double linear);

Lab srgb_to_lab(const std::array<double, 3>& rgb);
std::array<double, 3> lab_to_srgb(const Lab& lab);

struct Ciede2000Weights {
  double k_l = 1.0;
  double k_c = 1.0;
  double k_h = 1.0;
};

/// CIEDE2000 colour difference.
double ciede2000(const Lab& first, const Lab& second, Ciede2000Weights weights = {});

}  // namespace dfusion
