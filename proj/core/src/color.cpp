#include "dfusion/color.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dfusion {

namespace {

using Matrix3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB -> XYZ for the D65 white point.
constexpr Matrix3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}}};

Matrix3 invert(const Matrix3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Matrix3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

std::array<double, 3> apply(const Matrix3& m, const std::array<double, 3>& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

// White = image of linear RGB (1, 1, 1), so sRGB white maps to L* = 100, a* = b* = 0.
const std::array<double, 3>& white() {
  static const std::array<double, 3> w = apply(kRgbToXyz, {1.0, 1.0, 1.0});
  return w;
}

const Matrix3& xyz_to_rgb() {
  static const Matrix3 m = invert(kRgbToXyz);
  return m;
}

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inverse(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Hue angle in [0, 360).
double hue_degrees(double b, double a_prime) {
  if (a_prime == 0.0 && b == 0.0) return 0.0;
  double h = deg(std::atan2(b, a_prime));
  return h < 0.0 ? h + 360.0 : h;
}

// Hue differences that are 180 degrees in exact arithmetic can land a few ulps
// on either side; treat them as exactly 180.
constexpr double kHueTolerance = 1e-9;

}  // namespace

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double linear_to_srgb(double l) { return l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055; }

Lab srgb_to_lab(const std::array<double, 3>& rgb) {
  const auto xyz = apply(kRgbToXyz, {srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])});
  const auto& w = white();
  const double fx = lab_f(xyz[0] / w[0]);
  const double fy = lab_f(xyz[1] / w[1]);
  const double fz = lab_f(xyz[2] / w[2]);
  return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_srgb(const Lab& lab) {
  const double fy = (lab.l + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const auto& w = white();
  const auto rgb = apply(xyz_to_rgb(), {w[0] * lab_f_inverse(fx), w[1] * lab_f_inverse(fy), w[2] * lab_f_inverse(fz)});
  return {linear_to_srgb(rgb[0]), linear_to_srgb(rgb[1]), linear_to_srgb(rgb[2])};
}

double ciede2000(const Lab& first, const Lab& second, Ciede2000Weights weights) {
  const double pow25_7 = std::pow(25.0, 7.0);
  const double c1 = std::hypot(first.a, first.b);
  const double c2 = std::hypot(second.a, second.b);
  const double c_bar7 = std::pow((c1 + c2) / 2.0, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + pow25_7)));

  const double a1 = (1.0 + g) * first.a;
  const double a2 = (1.0 + g) * second.a;
  const double cp1 = std::hypot(a1, first.b);
  const double cp2 = std::hypot(a2, second.b);
  const double hp1 = hue_degrees(first.b, a1);
  const double hp2 = hue_degrees(second.b, a2);

  const double d_l = second.l - first.l;
  const double d_c = cp2 - cp1;
  const bool achromatic = cp1 * cp2 == 0.0;
  const double hue_gap = hp2 - hp1;
  const bool near_hue = std::abs(hue_gap) <= 180.0 + kHueTolerance;

  double d_hp = 0.0;
  if (!achromatic) {
    if (near_hue) {
      d_hp = hue_gap;
    } else {
      d_hp = hue_gap > 0.0 ? hue_gap - 360.0 : hue_gap + 360.0;
    }
  }
  const double d_h = 2.0 * std::sqrt(cp1 * cp2) * std::sin(rad(d_hp / 2.0));

  const double l_bar = (first.l + second.l) / 2.0;
  const double cp_bar = (cp1 + cp2) / 2.0;
  double hp_bar = hp1 + hp2;
  if (!achromatic) {
    if (near_hue) {
      hp_bar = (hp1 + hp2) / 2.0;
    } else if (hp1 + hp2 < 360.0) {
      hp_bar = (hp1 + hp2 + 360.0) / 2.0;
    } else {
      hp_bar = (hp1 + hp2 - 360.0) / 2.0;
    }
  }

  const double t = 1.0 - 0.17 * std::cos(rad(hp_bar - 30.0)) + 0.24 * std::cos(rad(2.0 * hp_bar)) +
                   0.32 * std::cos(rad(3.0 * hp_bar + 6.0)) - 0.20 * std::cos(rad(4.0 * hp_bar - 63.0));
  const double d_theta = 30.0 * std::exp(-std::pow((hp_bar - 275.0) / 25.0, 2.0));
  const double cp_bar7 = std::pow(cp_bar, 7.0);
  const double r_c = 2.0 * std::sqrt(cp_bar7 / (cp_bar7 + pow25_7));
  const double l_shift = (l_bar - 50.0) * (l_bar - 50.0);
  const double s_l = 1.0 + 0.015 * l_shift / std::sqrt(20.0 + l_shift);
  const double s_c = 1.0 + 0.045 * cp_bar;
  const double s_h = 1.0 + 0.015 * cp_bar * t;
  const double r_t = -std::sin(rad(2.0 * d_theta)) * r_c;

  const double tl = d_l / (weights.k_l * s_l);
  const double tc = d_c / (weights.k_c * s_c);
  const double th = d_h / (weights.k_h * s_h);
  return std::sqrt(std::max(0.0, tl * tl + tc * tc + th * th + r_t * tc * th));
}

}  // namespace dfusion
