#include "dfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dfusion/color.hpp"

namespace dfusion {

namespace {

void require_same_size(const GrayImage& a, const GrayImage& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(std::string(what) + ": image sizes differ (" + shape_string(a.tensor().dims()) + " vs " +
                                shape_string(b.tensor().dims()) + ")");
  }
}

std::size_t level_of(double v) {
  const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::size_t>(scaled);
}

double entropy_bits(std::span<const double> counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

double mutual_information(const GrayImage& x, const GrayImage& y) {
  std::vector<double> joint(256 * 256, 0.0), hx(256, 0.0), hy(256, 0.0);
  const std::size_t n = x.height() * x.width();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = level_of(x.tensor()[i]);
    const std::size_t b = level_of(y.tensor()[i]);
    joint[a * 256 + b] += 1.0;
    hx[a] += 1.0;
    hy[b] += 1.0;
  }
  const double total = static_cast<double>(n);
  return entropy_bits(hx, total) + entropy_bits(hy, total) - entropy_bits(joint, total);
}

// Plain row-major 2-D field used by the VIF and Qabf pipelines.
struct Field {
  std::size_t h = 0, w = 0;
  std::vector<double> v;

  Field(std::size_t rows, std::size_t cols) : h(rows), w(cols), v(rows * cols, 0.0) {}
  double& operator()(std::size_t y, std::size_t x) { return v[y * w + x]; }
  double operator()(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

Field field_of(const GrayImage& g, double scale) {
  Field f(g.height(), g.width());
  for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = scale * g.tensor()[i];
  return f;
}

// Symmetric (edge-duplicating) reflection of an index into [0, n).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < static_cast<std::ptrdiff_t>(n) ? r : period - 1 - r);
}

Field filter_same(const Field& in, const std::vector<double>& window, std::size_t n) {
  const auto radius = static_cast<std::ptrdiff_t>(n / 2);
  Field out(in.h, in.w);
  for (std::size_t y = 0; y < in.h; ++y) {
    for (std::size_t x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(i) - radius, in.h);
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t sx =
              reflect_index(static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(j) - radius, in.w);
          acc += window[i * n + j] * in(sy, sx);
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

Field downsample2(const Field& in) {
  Field out((in.h + 1) / 2, (in.w + 1) / 2);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x) out(y, x) = in(2 * y, 2 * x);
  return out;
}

Field product(const Field& a, const Field& b) {
  Field out(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

std::size_t window_size(std::size_t scale) { return (std::size_t{1} << (vif::kScales - scale)) + 1; }

// Brings a [0, 255] image down to the resolution of `scale`.
Field pyramid_level(Field image, std::size_t scale) {
  for (std::size_t s = 1; s <= scale; ++s) {
    const std::size_t n = window_size(s);
    image = downsample2(filter_same(image, vif::gaussian_window(n), n));
  }
  return image;
}

struct PixelTerms {
  std::vector<vif::LocalTerms> terms;
};

PixelTerms scale_terms(const Field& ref, const Field& dist, std::size_t scale) {
  const std::size_t n = window_size(scale);
  const auto window = vif::gaussian_window(n);
  const Field mu1 = filter_same(ref, window, n);
  const Field mu2 = filter_same(dist, window, n);
  const Field e11 = filter_same(product(ref, ref), window, n);
  const Field e22 = filter_same(product(dist, dist), window, n);
  const Field e12 = filter_same(product(ref, dist), window, n);
  PixelTerms out;
  out.terms.reserve(ref.v.size());
  for (std::size_t i = 0; i < ref.v.size(); ++i) {
    const double var1 = e11.v[i] - mu1.v[i] * mu1.v[i];
    const double var2 = e22.v[i] - mu2.v[i] * mu2.v[i];
    const double cov = e12.v[i] - mu1.v[i] * mu2.v[i];
    out.terms.push_back(vif::local_terms(var1, var2, cov));
  }
  return out;
}

struct EdgeField {
  Field strength;
  Field orientation;
};

EdgeField sobel_edges(const GrayImage& g) {
  const std::size_t h = g.height(), w = g.width();
  auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return g(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  EdgeField e{Field(h, w), Field(h, w)};
  for (std::size_t yy = 0; yy < h; ++yy) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const auto y = static_cast<std::ptrdiff_t>(yy), x = static_cast<std::ptrdiff_t>(xx);
      const double sx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
      const double sy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
      e.strength(yy, xx) = std::sqrt(sx * sx + sy * sy);
      e.orientation(yy, xx) = sx == 0.0 ? std::numbers::pi / 2.0 : std::atan(sy / sx);
    }
  }
  return e;
}

// Per-pixel edge preservation Q^{XF}.
Field edge_preservation(const EdgeField& source, const EdgeField& fused) {
  Field q(source.strength.h, source.strength.w);
  for (std::size_t i = 0; i < q.v.size(); ++i) {
    const double gs = source.strength.v[i], gf = fused.strength.v[i];
    double relative = 1.0;
    if (gs > gf) {
      relative = gf / gs;
    } else if (gs < gf) {
      relative = gs / gf;
    }
    const double alignment = 1.0 - std::abs(source.orientation.v[i] - fused.orientation.v[i]) / (std::numbers::pi / 2.0);
    const double qg = qabf::kGammaG / (1.0 + std::exp(qabf::kKappaG * (relative - qabf::kSigmaG)));
    const double qa = qabf::kGammaA / (1.0 + std::exp(qabf::kKappaA * (alignment - qabf::kSigmaA)));
    q.v[i] = qg * qa;
  }
  return q;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

GrayImage::GrayImage(const Tensor& image) {
  if (image.rank() == 2) {
    pixels_ = image.reshaped({image.dim(0), image.dim(1), 1});
  } else if (image.rank() == 3 && image.channels() == 1) {
    pixels_ = image;
  } else if (image.rank() == 3 && image.channels() == 3) {
    pixels_ = Tensor({image.height(), image.width(), 1});
    for (std::size_t p = 0; p < pixels_.size(); ++p) {
      pixels_[p] = 0.299 * image[3 * p] + 0.587 * image[3 * p + 1] + 0.114 * image[3 * p + 2];
    }
  } else {
    throw std::invalid_argument("GrayImage: unsupported shape " + shape_string(image.dims()));
  }
}

double metric_mi(const GrayImage& a, const GrayImage& b, const GrayImage& fused) {
  require_same_size(a, fused, "metric_mi");
  require_same_size(b, fused, "metric_mi");
  return mutual_information(a, fused) + mutual_information(b, fused);
}

namespace vif {

std::vector<double> gaussian_window(std::size_t n) {
  const double sigma = static_cast<double>(n) / 5.0;
  const double c = static_cast<double>(n - 1) / 2.0;
  std::vector<double> w(n * n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = static_cast<double>(i) - c, dx = static_cast<double>(j) - c;
      w[i * n + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += w[i * n + j];
    }
  for (double& v : w) v /= total;
  return w;
}

LocalTerms local_terms(double var_ref, double var_dist, double cov, double noise_variance) {
  constexpr double kTiny = 1e-10;
  var_ref = std::max(var_ref, 0.0);
  var_dist = std::max(var_dist, 0.0);
  double g = cov / (var_ref + kTiny);
  double sv = var_dist - g * cov;
  if (var_ref < kTiny) {
    g = 0.0;
    sv = var_dist;
    var_ref = 0.0;
  }
  if (var_dist < kTiny) {
    g = 0.0;
    sv = 0.0;
  }
  if (g < 0.0) {
    sv = var_dist;
    g = 0.0;
  }
  sv = std::max(sv, kTiny);
  return LocalTerms{g, std::log10(1.0 + g * g * var_ref / (sv + noise_variance)),
                    std::log10(1.0 + var_ref / noise_variance)};
}

ScaleSums scale_sums(const GrayImage& a, const GrayImage& b, const GrayImage& fused, std::size_t scale) {
  if (scale >= kScales) throw std::invalid_argument("vif::scale_sums: scale out of range");
  const Field fa = pyramid_level(field_of(a, 255.0), scale);
  const Field fb = pyramid_level(field_of(b, 255.0), scale);
  const Field ff = pyramid_level(field_of(fused, 255.0), scale);
  const PixelTerms ta = scale_terms(fa, ff, scale);
  const PixelTerms tb = scale_terms(fb, ff, scale);
  constexpr double kOffset = 1e-7;
  ScaleSums sums;
  for (std::size_t i = 0; i < ta.terms.size(); ++i) {
    const LocalTerms& pick = ta.terms[i].gain < tb.terms[i].gain ? ta.terms[i] : tb.terms[i];
    sums.info_fused += pick.info_fused + kOffset;
    sums.info_source += pick.info_source + kOffset;
  }
  return sums;
}

}  // namespace vif

double metric_vif(const GrayImage& a, const GrayImage& b, const GrayImage& fused) {
  require_same_size(a, fused, "metric_vif");
  require_same_size(b, fused, "metric_vif");
  if (fused.tensor().empty()) throw std::invalid_argument("metric_vif: empty image");
  double total = 0.0;
  for (std::size_t s = 0; s < vif::kScales; ++s) {
    if (vif::kScaleWeights[s] == 0.0) continue;
    const vif::ScaleSums sums = vif::scale_sums(a, b, fused, s);
    total += vif::kScaleWeights[s] * sums.info_fused / sums.info_source;
  }
  return total;
}

double metric_sf(const GrayImage& f) {
  const std::size_t h = f.height(), w = f.width();
  if (h < 2 || w < 2) throw std::invalid_argument("metric_sf: image must be at least 2x2");
  double rf = 0.0, cf = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 1; x < w; ++x) rf += std::pow(f(y, x) - f(y, x - 1), 2.0);
  for (std::size_t y = 1; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) cf += std::pow(f(y, x) - f(y - 1, x), 2.0);
  rf /= static_cast<double>(h * (w - 1));
  cf /= static_cast<double>((h - 1) * w);
  return std::sqrt(rf + cf);
}

double metric_qabf(const GrayImage& a, const GrayImage& b, const GrayImage& fused) {
  require_same_size(a, fused, "metric_qabf");
  require_same_size(b, fused, "metric_qabf");
  if (fused.height() < 3 || fused.width() < 3) throw std::invalid_argument("metric_qabf: image must be at least 3x3");
  const EdgeField ea = sobel_edges(a), eb = sobel_edges(b), ef = sobel_edges(fused);
  const Field qa = edge_preservation(ea, ef);
  const Field qb = edge_preservation(eb, ef);
  double numerator = 0.0, denominator = 0.0;
  for (std::size_t i = 0; i < qa.v.size(); ++i) {
    numerator += qa.v[i] * ea.strength.v[i] + qb.v[i] * eb.strength.v[i];
    denominator += ea.strength.v[i] + eb.strength.v[i];
  }
  return denominator > 0.0 ? numerator / denominator : 0.0;
}

double metric_sd(const GrayImage& f) {
  const auto values = f.tensor().data();
  if (values.empty()) throw std::invalid_argument("metric_sd: empty image");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += 255.0 * v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (255.0 * v - mean) * (255.0 * v - mean);
  return std::sqrt(var / n);
}

double metric_delta_e(const Tensor& visible, const Tensor& fused) {
  if (visible.rank() != 3 || visible.channels() != 3 || !visible.same_shape(fused)) {
    throw std::invalid_argument("metric_delta_e: expected two H x W x 3 images of equal size, got " +
                                shape_string(visible.dims()) + " and " + shape_string(fused.dims()));
  }
  const std::size_t pixels = visible.height() * visible.width();
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const Lab lv = srgb_to_lab({visible[3 * p], visible[3 * p + 1], visible[3 * p + 2]});
    const Lab lf = srgb_to_lab({fused[3 * p], fused[3 * p + 1], fused[3 * p + 2]});
    total += ciede2000(lv, lf);
  }
  return total / static_cast<double>(pixels);
}

MetricRecord evaluate_pair(const SourcePair& pair, const Tensor& fused) {
  const GrayImage ir(pair.infrared), vis(pair.visible), f(fused);
  MetricRecord r;
  r.pair_id = pair.pair_id;
  r.mi = metric_mi(ir, vis, f);
  r.vif = metric_vif(ir, vis, f);
  r.sf = metric_sf(f);
  r.qabf = metric_qabf(ir, vis, f);
  r.sd = metric_sd(f);
  r.delta_e = metric_delta_e(pair.visible, fused);
  return r;
}

MetricReport evaluate(std::span<const SourcePair> pairs, std::span<const Tensor> fused) {
  if (pairs.size() != fused.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(pairs.size()) + " pairs but " +
                                std::to_string(fused.size()) + " fused images");
  }
  MetricReport report;
  report.records.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) report.records.push_back(evaluate_pair(pairs[i], fused[i]));
  std::sort(report.records.begin(), report.records.end(),
            [](const MetricRecord& x, const MetricRecord& y) { return x.pair_id < y.pair_id; });

  report.mean.pair_id = "mean";
  if (report.records.empty()) return report;
  for (const MetricRecord& r : report.records) {
    report.mean.mi += r.mi;
    report.mean.vif += r.vif;
    report.mean.sf += r.sf;
    report.mean.qabf += r.qabf;
    report.mean.sd += r.sd;
    report.mean.delta_e += r.delta_e;
  }
  const double n = static_cast<double>(report.records.size());
  report.mean.mi /= n;
  report.mean.vif /= n;
  report.mean.sf /= n;
  report.mean.qabf /= n;
  report.mean.sd /= n;
  report.mean.delta_e /= n;
  return report;
}

std::string format_table(const MetricReport& report) {
  std::ostringstream os;
  os << "pair\tMI\tVIF\tSF\tQabf\tSD\tDeltaE\n";
  auto row = [&](const MetricRecord& r) {
    os << r.pair_id << '\t' << fixed6(r.mi) << '\t' << fixed6(r.vif) << '\t' << fixed6(r.sf) << '\t' << fixed6(r.qabf)
       << '\t' << fixed6(r.sd) << '\t' << fixed6(r.delta_e) << '\n';
  };
  for (const MetricRecord& r : report.records) row(r);
  row(report.mean);
  return os.str();
}

std::string format_records(const MetricReport& report) {
  std::ostringstream os;
  for (const MetricRecord& r : report.records) {
    os << r.pair_id << ',' << fixed6(r.mi) << ',' << fixed6(r.vif) << ',' << fixed6(r.sf) << ',' << fixed6(r.qabf) << ','
       << fixed6(r.sd) << ',' << fixed6(r.delta_e) << '\n';
  }
  return os.str();
}

}  // namespace dfusion
