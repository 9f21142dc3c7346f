#include "dfusion/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dfusion/errors.hpp"
#include "dfusion/image_io.hpp"
#include "dfusion/rng.hpp"

namespace fs = std::filesystem;

namespace dfusion {

namespace {

using Rgb = std::array<double, 3>;

double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

Rgb random_colour(Rng& rng, double lo, double hi) {
  return {lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform()};
}

// Saturated colour: one channel high, one low, one anywhere.
Rgb vivid_colour(Rng& rng) {
  Rgb c = random_colour(rng, 0.0, 1.0);
  const auto hi = static_cast<std::size_t>(rng.uniform_int(0, 2));
  const auto lo = (hi + 1 + static_cast<std::size_t>(rng.uniform_int(0, 1))) % 3;
  c[hi] = 0.75 + 0.25 * rng.uniform();
  c[lo] = 0.2 * rng.uniform();
  return c;
}

struct Ellipse {
  double cy, cx, ry, rx;
  bool contains(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
};

struct Box {
  double y0, x0, y1, x1;
  bool contains(double y, double x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

double quantized(double v) { return quantize_byte(v) / 255.0; }

}  // namespace

SyntheticPair synthesize_pair(std::size_t height, std::size_t width, std::uint64_t seed, std::size_t index) {
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("synthetic images need H and W divisible by 16, got " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  Rng rng(mix_seed(seed, index));
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const double unit = std::min(h, w);

  // Visible scene.
  const Rgb top = random_colour(rng, 0.35, 0.95), bottom = random_colour(rng, 0.25, 0.85);
  const double angle = 2.0 * M_PI * rng.uniform();
  const double gy = std::sin(angle), gx = std::cos(angle);

  const std::size_t n_shapes = static_cast<std::size_t>(rng.uniform_int(2, 3));
  std::vector<std::pair<Box, Rgb>> boxes;
  std::vector<std::pair<Ellipse, Rgb>> discs;
  for (std::size_t s = 0; s < n_shapes; ++s) {
    const double sy = h * rng.uniform(), sx = w * rng.uniform();
    const double ry = unit * (0.08 + 0.12 * rng.uniform()), rx = unit * (0.08 + 0.12 * rng.uniform());
    if (rng.uniform() < 0.5) {
      boxes.push_back({Box{sy - ry, sx - rx, sy + ry, sx + rx}, vivid_colour(rng)});
    } else {
      discs.push_back({Ellipse{sy, sx, ry, rx}, vivid_colour(rng)});
    }
  }
  // Dark region (night, shadow) where only the infrared image carries structure.
  const double dh = h * (0.3 + 0.15 * rng.uniform()), dw = w * (0.3 + 0.15 * rng.uniform());
  const double dy0 = (h - dh) * rng.uniform(), dx0 = (w - dw) * rng.uniform();
  const Box dark{dy0, dx0, dy0 + dh, dx0 + dw};
  const double dark_level = 0.05 + 0.1 * rng.uniform();

  // Thermal targets: one inside the dark region, up to two anywhere.
  std::vector<Ellipse> thermal;
  thermal.push_back(Ellipse{dy0 + dh / 2.0, dx0 + dw / 2.0, dh * (0.3 + 0.15 * rng.uniform()),
                            dw * (0.3 + 0.15 * rng.uniform())});
  const std::size_t extra = static_cast<std::size_t>(rng.uniform_int(0, 2));
  for (std::size_t s = 0; s < extra; ++s) {
    thermal.push_back(Ellipse{h * rng.uniform(), w * rng.uniform(), unit * (0.06 + 0.1 * rng.uniform()),
                              unit * (0.06 + 0.1 * rng.uniform())});
  }
  std::vector<double> heat;
  for (std::size_t s = 0; s < thermal.size(); ++s) heat.push_back(0.8 + 0.2 * rng.uniform());
  const double ir_base = 0.05 + 0.15 * rng.uniform();
  const double ir_slope = 0.1 * rng.uniform();

  SyntheticPair pair;
  char name[32];
  std::snprintf(name, sizeof name, "%05zu", index);
  pair.id = name;
  pair.visible = Tensor({height, width, 3});
  pair.infrared = Tensor({height, width, 1});
  pair.mask = Tensor({height, width, 1});

  for (std::size_t yy = 0; yy < height; ++yy) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      const double y = static_cast<double>(yy) + 0.5, x = static_cast<double>(xx) + 0.5;
      const double u = 0.5 + 0.5 * ((y / h - 0.5) * gy + (x / w - 0.5) * gx) * 1.4;
      const double s = std::clamp(u, 0.0, 1.0);
      Rgb c{top[0] + (bottom[0] - top[0]) * s, top[1] + (bottom[1] - top[1]) * s, top[2] + (bottom[2] - top[2]) * s};
      for (const auto& [box, colour] : boxes)
        if (box.contains(y, x)) c = colour;
      for (const auto& [disc, colour] : discs)
        if (disc.contains(y, x)) c = colour;
      if (dark.contains(y, x)) {
        const double scale = dark_level / std::max(luminance(c), 1e-3);
        for (double& v : c) v = std::min(v * scale, 1.0);
      }
      for (std::size_t k = 0; k < 3; ++k) pair.visible.at(yy, xx, k) = quantized(c[k]);

      double ir = ir_base + ir_slope * y / h;
      bool hot = false;
      for (std::size_t t = 0; t < thermal.size(); ++t) {
        if (thermal[t].contains(y, x)) {
          ir = std::max(ir, heat[t]);
          hot = true;
        }
      }
      pair.infrared.at(yy, xx, 0) = quantized(ir);
      pair.mask.at(yy, xx, 0) = hot ? 1.0 : 0.0;
    }
  }
  return pair;
}

std::vector<SyntheticPair> synthesize_dataset(std::size_t count, std::size_t height, std::size_t width,
                                              std::uint64_t seed, std::size_t first_index) {
  std::vector<SyntheticPair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pairs.push_back(synthesize_pair(height, width, seed, first_index + i));
  return pairs;
}

double complementary_fraction(const Tensor& visible, const Tensor& infrared, double margin) {
  const std::size_t pixels = visible.height() * visible.width();
  if (pixels == 0 || infrared.size() != pixels) throw std::invalid_argument("complementary_fraction: shape mismatch");
  std::size_t hits = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double lum = 0.299 * visible[3 * p] + 0.587 * visible[3 * p + 1] + 0.114 * visible[3 * p + 2];
    if (infrared[p] - lum >= margin) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pixels);
}

DatasetManifest gen_synthetic(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                              const fs::path& out_dir) {
  DatasetManifest manifest;
  manifest.split = "train";
  manifest.seed = seed;
  if (count == 0) {
    manifest.seed.reset();
    return manifest;
  }
  for (const char* sub : {"visible", "infrared", "masks"}) fs::create_directories(out_dir / sub);
  for (std::size_t i = 0; i < count; ++i) {
    const SyntheticPair pair = synthesize_pair(height, width, seed, i);
    const fs::path vis = fs::path("visible") / (pair.id + ".png");
    const fs::path ir = fs::path("infrared") / (pair.id + ".png");
    save_image(pair.visible, out_dir / vis);
    save_image(pair.infrared, out_dir / ir);
    save_image(pair.mask, thermal_mask_path(out_dir, pair.id));
    manifest.entries.push_back({pair.id, vis, ir});
  }
  save_manifest(manifest, out_dir / "manifest.tsv");
  for (ManifestEntry& e : manifest.entries) {
    e.visible = out_dir / e.visible;
    e.infrared = out_dir / e.infrared;
  }
  return manifest;
}

}  // namespace dfusion
