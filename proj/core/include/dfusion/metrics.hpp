#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dfusion/tensor.hpp"

namespace dfusion {

/// Single-channel intensity image in [0, 1], stored as H x W x 1.
class GrayImage {
 public:
  GrayImage() = default;
  /// Accepts H x W, H x W x 1 or H x W x 3 (collapsed by 0.299 R + 0.587 G + 0.114 B).
  explicit GrayImage(const Tensor& image);

  const Tensor& tensor() const noexcept { return pixels_; }
  std::size_t height() const { return pixels_.height(); }
  std::size_t width() const { return pixels_.width(); }
  double operator()(std::size_t y, std::size_t x) const { return pixels_.at(y, x, 0); }

 private:
  Tensor pixels_;
};

/// I(A;F) + I(B;F) in bits from 256-bin joint histograms of 8-bit levels.
double metric_mi(const GrayImage& a, const GrayImage& b, const GrayImage& fused);

/// Fusion visual information fidelity over four scales, computed on the [0, 255] scale.
/// Filtering is size-preserving with symmetric borders, so small images are accepted.
double metric_vif(const GrayImage& a, const GrayImage& b, const GrayImage& fused);

/// sqrt(RF^2 + CF^2) with RF, CF the RMS horizontal and vertical first differences on [0, 1].
double metric_sf(const GrayImage& fused);

/// Xydeas-Petrovic edge-transfer score in [0, 1].
double metric_qabf(const GrayImage& a, const GrayImage& b, const GrayImage& fused);

/// Population standard deviation on the [0, 255] scale.
double metric_sd(const GrayImage& fused);

/// Mean CIEDE2000 difference between the visible image and the fused image (both H x W x 3 sRGB in [0, 1]).
double metric_delta_e(const Tensor& visible, const Tensor& fused);

namespace qabf {
inline constexpr double kGammaG = 0.9994;
inline constexpr double kKappaG = -15.0;
inline constexpr double kSigmaG = 0.5;
inline constexpr double kGammaA = 0.9879;
inline constexpr double kKappaA = -22.0;
inline constexpr double kSigmaA = 0.8;
}  // namespace qabf

namespace vif {
inline constexpr double kNoiseVariance = 2.0;
inline constexpr std::size_t kScales = 4;
/// Scale weights of the fusion variant; scale 2 is not counted.
inline constexpr std::array<double, kScales> kScaleWeights{1.0 / 2.15, 0.0, 0.15 / 2.15, 1.0 / 2.15};

/// Local statistics of a (source, fused) pair and the information terms they imply.
struct LocalTerms {
  double gain;         // g = cov / var_ref
  double info_fused;   // log10(1 + g^2 var_ref / (sv^2 + noise))
  double info_source;  // log10(1 + var_ref / noise)
};
LocalTerms local_terms(double var_ref, double var_dist, double cov, double noise_variance = kNoiseVariance);

/// Sums of the fused and source information terms at one scale (0-based), the
/// source chosen per pixel as in the full metric.
struct ScaleSums {
  double info_fused = 0.0;
  double info_source = 0.0;
};
ScaleSums scale_sums(const GrayImage& a, const GrayImage& b, const GrayImage& fused, std::size_t scale);

/// Normalised Gaussian window of odd size `n`, sigma n / 5, row-major n x n.
std::vector<double> gaussian_window(std::size_t n);
}  // namespace vif

struct MetricRecord {
  std::string pair_id;
  double mi = 0.0;
  double vif = 0.0;
  double sf = 0.0;
  double qabf = 0.0;
  double sd = 0.0;
  double delta_e = 0.0;
};

struct MetricReport {
  std::vector<MetricRecord> records;  // sorted by pair id
  MetricRecord mean;                  // pair_id "mean"
};

struct SourcePair {
  std::string pair_id;
  Tensor visible;   // H x W x 3 in [0, 1]
  Tensor infrared;  // H x W x 1 in [0, 1]
};

/// Sources for MI, VIF and Qabf are the grayscale infrared and visible images.
MetricRecord evaluate_pair(const SourcePair& pair, const Tensor& fused);
/// Per-pair metrics plus arithmetic means, one fused image per pair. The
/// reduction always runs in pair-id order.
MetricReport evaluate(std::span<const SourcePair> pairs, std::span<const Tensor> fused);

/// Tab-delimited table with a header row, one row per pair and a final mean row.
std::string format_table(const MetricReport& report);
/// One comma-separated line per pair: id,MI,VIF,SF,Qabf,SD,DeltaE with 6 decimals.
std::string format_records(const MetricReport& report);

}  // namespace dfusion
