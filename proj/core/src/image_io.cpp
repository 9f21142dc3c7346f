#include "dfusion/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "dfusion/errors.hpp"

namespace dfusion {

namespace {

struct PngImage {
  png_image image;

  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::string describe(const png_image& image) { return image.message[0] ? image.message : "unknown libpng error"; }

}  // namespace

std::uint8_t quantize_byte(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

Tensor load_image(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + describe(png.image));
  }
  const bool colour = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = colour ? 3 : 1;
  const std::size_t h = png.image.height, w = png.image.width;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + describe(png.image));
  }
  Tensor out({h, w, channels});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
  return out;
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || (image.channels() != 1 && image.channels() != 3)) {
    throw std::invalid_argument("save_image: expected H x W x 1 or H x W x 3, got " + shape_string(image.dims()));
  }
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("save_image: values must lie in [0, 1]");
  }
  std::vector<png_byte> buffer(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buffer[i] = quantize_byte(image[i]);

  PngImage png;
  png.image.width = static_cast<png_uint_32>(image.width());
  png.image.height = static_cast<png_uint_32>(image.height());
  png.image.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + describe(png.image));
  }
}

MultiChannelImage load_pair(const std::filesystem::path& visible, const std::filesystem::path& infrared) {
  const Tensor vis = load_image(visible);
  Tensor ir = load_image(infrared);
  if (vis.channels() != 3) {
    throw std::invalid_argument("visible image '" + visible.string() + "' is not a 3-channel image");
  }
  if (ir.channels() == 3) {
    Tensor gray({ir.height(), ir.width(), 1});
    for (std::size_t p = 0; p < gray.size(); ++p) {
      gray[p] = 0.299 * ir[3 * p] + 0.587 * ir[3 * p + 1] + 0.114 * ir[3 * p + 2];
    }
    ir = std::move(gray);
  }
  if (vis.height() != ir.height() || vis.width() != ir.width()) {
    throw std::invalid_argument("size mismatch: '" + visible.string() + "' is " + std::to_string(vis.height()) + "x" +
                                std::to_string(vis.width()) + " but '" + infrared.string() + "' is " +
                                std::to_string(ir.height()) + "x" + std::to_string(ir.width()));
  }
  return MultiChannelImage::from_sources(vis, ir);
}

}  // namespace dfusion
