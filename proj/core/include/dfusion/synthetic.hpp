#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfusion/diffusion.hpp"
#include "dfusion/manifest.hpp"
#include "dfusion/tensor.hpp"

namespace dfusion {

/// One generated scene, already quantized to 8-bit levels so it equals what
/// load_image returns for the written files.
struct SyntheticPair {
  std::string id;
  Tensor visible;   // H x W x 3
  Tensor infrared;  // H x W x 1
  Tensor mask;      // H x W x 1, 1 on thermal shapes

  MultiChannelImage image() const { return MultiChannelImage::from_sources(visible, infrared); }
};

/// Visible: colour gradient background, coloured shapes and one dark region.
/// Infrared: dim background with bright thermal ellipses, at least one centred
/// in the dark region. Pair `index` depends only on (seed, index).
SyntheticPair synthesize_pair(std::size_t height, std::size_t width, std::uint64_t seed, std::size_t index);

std::vector<SyntheticPair> synthesize_dataset(std::size_t count, std::size_t height, std::size_t width,
                                              std::uint64_t seed, std::size_t first_index = 0);

/// Fraction of pixels whose infrared value exceeds visible luminance by at least `margin`.
double complementary_fraction(const Tensor& visible, const Tensor& infrared, double margin = 0.3);

/// Writes visible/, infrared/, masks/ PNGs and manifest.tsv under `out_dir`.
/// The file stores paths relative to `out_dir`; the returned manifest has them
/// joined with `out_dir`. count = 0 writes nothing and returns an empty manifest.
DatasetManifest gen_synthetic(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

}  // namespace dfusion
