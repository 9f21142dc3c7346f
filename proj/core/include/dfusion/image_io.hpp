#pragma once

#include <cstdint>
#include <filesystem>

#include "dfusion/diffusion.hpp"
#include "dfusion/tensor.hpp"

namespace dfusion {

/// Round-half-up 8-bit quantization of a [0, 1] value.
std::uint8_t quantize_byte(double v);

/// Decodes an 8-bit PNG to H x W x C in [0, 1]. Gray images give C = 1, colour
/// images C = 3; alpha is dropped.
Tensor load_image(const std::filesystem::path& path);

/// Writes an H x W x 1 or H x W x 3 image with values in [0, 1] as an 8-bit PNG.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Visible (3 channels) and infrared (1 channel, or 3 channels collapsed by
/// luminance) of equal size, packed R, G, B, IR in [0, 1].
MultiChannelImage load_pair(const std::filesystem::path& visible, const std::filesystem::path& infrared);

}  // namespace dfusion
