#pragma once

// Plain-loop versions of the fusion metrics, written from their definitions.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "dfusion/color.hpp"
#include "oracles.hpp"

namespace oracle {

using dfusion::Rng;
using dfusion::Tensor;

using Grid = std::vector<std::vector<double>>;

inline Grid grid_of(const Tensor& t) {
  Grid g(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t y = 0; y < g.size(); ++y)
    for (std::size_t x = 0; x < g[0].size(); ++x) g[y][x] = t[y * g[0].size() + x];
  return g;
}

inline Tensor random_gray(Rng& rng, std::size_t h, std::size_t w) { return oracle::random_tensor(rng, {h, w, 1}, 0, 1); }

// I(X;Y) in bits from the definition, 8-bit levels.
inline double mi_oracle(const Grid& a, const Grid& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  double n = 0;
  for (std::size_t y = 0; y < a.size(); ++y)
    for (std::size_t x = 0; x < a[0].size(); ++x) {
      const int la = static_cast<int>(std::lround(a[y][x] * 255)), lb = static_cast<int>(std::lround(b[y][x] * 255));
      joint[{la, lb}] += 1;
      pa[la] += 1;
      pb[lb] += 1;
      n += 1;
    }
  double mi = 0;
  for (const auto& [k, c] : joint) {
    const double p = c / n;
    mi += p * std::log2(p / ((pa[k.first] / n) * (pb[k.second] / n)));
  }
  return mi;
}

inline double sf_oracle(const Grid& f) {
  double rf = 0, cf = 0;
  const std::size_t h = f.size(), w = f[0].size();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 1; x < w; ++x) rf += (f[y][x] - f[y][x - 1]) * (f[y][x] - f[y][x - 1]);
  for (std::size_t y = 1; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) cf += (f[y][x] - f[y - 1][x]) * (f[y][x] - f[y - 1][x]);
  return std::sqrt(rf / (h * (w - 1)) + cf / ((h - 1) * w));
}

inline double sd_oracle(const Grid& f) {
  double s = 0, n = 0;
  for (const auto& row : f)
    for (double v : row) s += 255 * v, n += 1;
  const double mean = s / n;
  double var = 0;
  for (const auto& row : f)
    for (double v : row) var += (255 * v - mean) * (255 * v - mean);
  return std::sqrt(var / n);
}

// Edge-transfer score written out with explicit zero-padded arrays.
inline double qabf_oracle(const Grid& a, const Grid& b, const Grid& f) {
  const std::size_t h = f.size(), w = f[0].size();
  auto edges = [&](const Grid& g, Grid& strength, Grid& angle) {
    Grid p(h + 2, std::vector<double>(w + 2, 0.0));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) p[y + 1][x + 1] = g[y][x];
    strength.assign(h, std::vector<double>(w));
    angle.assign(h, std::vector<double>(w));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double sx = p[y][x + 2] + 2 * p[y + 1][x + 2] + p[y + 2][x + 2] - p[y][x] - 2 * p[y + 1][x] - p[y + 2][x];
        const double sy = p[y + 2][x] + 2 * p[y + 2][x + 1] + p[y + 2][x + 2] - p[y][x] - 2 * p[y][x + 1] - p[y][x + 2];
        strength[y][x] = std::hypot(sx, sy);
        angle[y][x] = sx == 0 ? std::numbers::pi / 2 : std::atan(sy / sx);
      }
  };
  Grid ga, aa, gb, ab, gf, af;
  edges(a, ga, aa);
  edges(b, gb, ab);
  edges(f, gf, af);
  auto q = [&](double gs, double as, double gfv, double afv) {
    const double g = gs > gfv ? gfv / gs : (gs == gfv ? 1.0 : gs / gfv);
    const double al = 1 - std::abs(as - afv) / (std::numbers::pi / 2);
    return 0.9994 / (1 + std::exp(-15 * (g - 0.5))) * 0.9879 / (1 + std::exp(-22 * (al - 0.8)));
  };
  double num = 0, den = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      num += q(ga[y][x], aa[y][x], gf[y][x], af[y][x]) * ga[y][x] + q(gb[y][x], ab[y][x], gf[y][x], af[y][x]) * gb[y][x];
      den += ga[y][x] + gb[y][x];
    }
  return den == 0 ? 0 : num / den;
}

// Four-scale VIF with symmetric-border 'same' filtering, from explicit padded copies.
inline Grid gauss_filter(const Grid& in, int n) {
  const int h = static_cast<int>(in.size()), w = static_cast<int>(in[0].size()), r = n / 2;
  const double sigma = n / 5.0;
  std::vector<double> win(n * n);
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) total += win[i * n + j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
  auto mirror = [](int i, int len) {
    while (i < 0 || i >= len) i = i < 0 ? -i - 1 : 2 * len - i - 1;
    return i;
  };
  Grid out(h, std::vector<double>(w, 0.0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[y][x] += win[i * n + j] / total * in[mirror(y + i - r, h)][mirror(x + j - r, w)];
  return out;
}

inline double vif_oracle(const Grid& a0, const Grid& b0, const Grid& f0) {
  Grid a = a0, b = b0, f = f0;
  for (auto* g : {&a, &b, &f})
    for (auto& row : *g)
      for (double& v : row) v *= 255;
  const double weights[4] = {1 / 2.15, 0, 0.15 / 2.15, 1 / 2.15};
  double total = 0;
  for (int scale = 0; scale < 4; ++scale) {
    const int n = (1 << (4 - scale)) + 1;
    if (scale > 0) {
      for (auto* g : {&a, &b, &f}) {
        const Grid s = gauss_filter(*g, n);
        Grid d((s.size() + 1) / 2, std::vector<double>((s[0].size() + 1) / 2));
        for (std::size_t y = 0; y < d.size(); ++y)
          for (std::size_t x = 0; x < d[0].size(); ++x) d[y][x] = s[2 * y][2 * x];
        *g = d;
      }
    }
    auto terms = [&](const Grid& r, const Grid& d, Grid& gain, Grid& num, Grid& den) {
      Grid rr = r, dd = d, rd = r;
      for (std::size_t y = 0; y < r.size(); ++y)
        for (std::size_t x = 0; x < r[0].size(); ++x) rr[y][x] = r[y][x] * r[y][x], dd[y][x] = d[y][x] * d[y][x], rd[y][x] = r[y][x] * d[y][x];
      const Grid m1 = gauss_filter(r, n), m2 = gauss_filter(d, n);
      const Grid e11 = gauss_filter(rr, n), e22 = gauss_filter(dd, n), e12 = gauss_filter(rd, n);
      gain = num = den = m1;
      for (std::size_t y = 0; y < r.size(); ++y)
        for (std::size_t x = 0; x < r[0].size(); ++x) {
          double s1 = std::max(e11[y][x] - m1[y][x] * m1[y][x], 0.0), s2 = std::max(e22[y][x] - m2[y][x] * m2[y][x], 0.0);
          const double s12 = e12[y][x] - m1[y][x] * m2[y][x];
          double g = s12 / (s1 + 1e-10), sv = s2 - g * s12;
          if (s1 < 1e-10) g = 0, sv = s2, s1 = 0;
          if (s2 < 1e-10) g = 0, sv = 0;
          if (g < 0) sv = s2, g = 0;
          if (sv <= 1e-10) sv = 1e-10;
          gain[y][x] = g;
          num[y][x] = std::log10(1 + g * g * s1 / (sv + 2));
          den[y][x] = std::log10(1 + s1 / 2);
        }
    };
    Grid g1, n1, d1, g2, n2, d2;
    terms(a, f, g1, n1, d1);
    terms(b, f, g2, n2, d2);
    double num = 0, den = 0;
    for (std::size_t y = 0; y < f.size(); ++y)
      for (std::size_t x = 0; x < f[0].size(); ++x) {
        const bool first = g1[y][x] < g2[y][x];
        num += (first ? n1[y][x] : n2[y][x]) + 1e-7;
        den += (first ? d1[y][x] : d2[y][x]) + 1e-7;
      }
    total += weights[scale] * num / den;
  }
  return total;
}

// Mean CIEDE2000 over pixels, visible against fused.
inline double delta_e_oracle(const Tensor& vis, const Tensor& fused) {
  const std::size_t n = vis.dim(0) * vis.dim(1);
  double total = 0;
  for (std::size_t p = 0; p < n; ++p)
    total += dfusion::ciede2000(dfusion::srgb_to_lab({vis[3 * p], vis[3 * p + 1], vis[3 * p + 2]}),
                                dfusion::srgb_to_lab({fused[3 * p], fused[3 * p + 1], fused[3 * p + 2]}));
  return total / static_cast<double>(n);
}

}  // namespace oracle
