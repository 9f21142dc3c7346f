#include "dfusion/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dfusion {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t element_count(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void require_hwc(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected HWC tensor, got " + shape_string(t.dims()));
  }
}

struct ConvGeometry {
  std::size_t in_h, in_w, in_c;
  std::size_t kh, kw, out_c;
  std::size_t out_h, out_w;
  std::size_t stride, padding;

  std::size_t patch_size() const { return kh * kw * in_c; }
  std::size_t out_pixels() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

ConvGeometry conv_geometry(const std::vector<std::size_t>& input_dims, const std::vector<std::size_t>& kernel_dims,
                           std::size_t stride, std::size_t padding) {
  if (input_dims.size() != 3) {
    throw std::invalid_argument("conv2d: input must be HWC, got " + shape_string(input_dims));
  }
  if (kernel_dims.size() != 4) {
    throw std::invalid_argument("conv2d: kernel must be [kh, kw, c_in, c_out], got " + shape_string(kernel_dims));
  }
  if (stride < 1) {
    throw std::invalid_argument("conv2d: stride must be >= 1");
  }
  if (kernel_dims[2] != input_dims[2]) {
    throw std::invalid_argument("conv2d: kernel c_in " + std::to_string(kernel_dims[2]) +
                                " does not match input channels " + std::to_string(input_dims[2]));
  }
  ConvGeometry g{input_dims[0], input_dims[1], input_dims[2], kernel_dims[0], kernel_dims[1], kernel_dims[3],
                 0,             0,             stride,        padding};
  if (g.in_h + 2 * padding < g.kh || g.in_w + 2 * padding < g.kw) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.in_h + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.in_w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Rows are output pixels, columns follow the kernel's (ky, kx, c_in) order.
RowMatrix im2col(const Tensor& input, const ConvGeometry& g) {
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.out_pixels()), static_cast<Eigen::Index>(g.patch_size()));
  const double* src = input.data().data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* row = cols.data() + (oy * g.out_w + ox) * g.patch_size();
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* pixel = src + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
          std::copy(pixel, pixel + g.in_c, row + (ky * g.kw + kx) * g.in_c);
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const RowMatrix& cols, const ConvGeometry& g, Tensor& out) {
  double* dst = out.data().data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* row = cols.data() + (oy * g.out_w + ox) * g.patch_size();
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          double* pixel = dst + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
          const double* src = row + (ky * g.kw + kx) * g.in_c;
          for (std::size_t c = 0; c < g.in_c; ++c) pixel[c] += src[c];
        }
      }
    }
  }
}

struct ResampleTap {
  std::size_t lo, hi;
  double frac;
};

std::vector<ResampleTap> resample_taps(std::size_t in, std::size_t out) {
  std::vector<ResampleTap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (in == 1 || out == 1) {
      taps[i] = {0, 0, 0.0};
      continue;
    }
    // Exact rational position i * (in-1) / (out-1) split into integer and fractional parts.
    const std::size_t num = i * (in - 1);
    const std::size_t den = out - 1;
    const std::size_t lo = num / den;
    const double frac = static_cast<double>(num % den) / static_cast<double>(den);
    taps[i] = {lo, std::min(lo + 1, in - 1), frac};
  }
  return taps;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : dims_(std::move(dims)) {
  for (std::size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("Tensor: dimensions must be positive, got " + shape_string(dims_));
  }
  data_.assign(element_count(dims_), fill);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  for (std::size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("Tensor: dimensions must be positive, got " + shape_string(dims_));
  }
  if (element_count(dims_) != data_.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                                shape_string(dims_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("Tensor::item on tensor of shape " + shape_string(dims_));
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const { return Tensor(std::move(dims), data_); }

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) throw std::domain_error(std::string(what) + ": non-finite value");
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_difference: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor slice_channels(const Tensor& image, std::size_t first, std::size_t count) {
  require_hwc(image, "slice_channels");
  if (count == 0 || first + count > image.channels()) throw std::invalid_argument("slice_channels: range out of bounds");
  Tensor out({image.height(), image.width(), count});
  const std::size_t pixels = image.height() * image.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < count; ++c) out[p * count + c] = image[p * image.channels() + first + c];
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_hwc(a, "concat_channels");
  require_hwc(b, "concat_channels");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("concat_channels: spatial mismatch " + shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  }
  const std::size_t ca = a.channels(), cb = b.channels();
  Tensor out({a.height(), a.width(), ca + cb});
  const std::size_t pixels = a.height() * a.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(a.data().data() + p * ca, ca, out.data().data() + p * (ca + cb));
    std::copy_n(b.data().data() + p * cb, cb, out.data().data() + p * (ca + cb) + ca);
  }
  return out;
}

Tensor crop(const Tensor& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  require_hwc(image, "crop");
  if (h == 0 || w == 0 || y0 + h > image.height() || x0 + w > image.width()) {
    throw std::invalid_argument("crop: window outside image");
  }
  const std::size_t c = image.channels();
  Tensor out({h, w, c});
  for (std::size_t y = 0; y < h; ++y) {
    const double* src = image.data().data() + ((y0 + y) * image.width() + x0) * c;
    std::copy_n(src, w * c, out.data().data() + y * w * c);
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.dims(), kernel.dims(), stride, padding);
  Tensor out({g.out_h, g.out_w, g.out_c});
  const auto rows = static_cast<Eigen::Index>(g.out_pixels());
  const auto inner = static_cast<Eigen::Index>(g.patch_size());
  const auto cols = static_cast<Eigen::Index>(g.out_c);
  ConstMatrixMap weights(kernel.data().data(), inner, cols);
  MatrixMap result(out.data().data(), rows, cols);
  if (g.is_pointwise()) {
    result.noalias() = ConstMatrixMap(input.data().data(), rows, inner) * weights;
  } else {
    result.noalias() = im2col(input, g) * weights;
  }
  return out;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, const std::vector<std::size_t>& input_dims,
                         std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input_dims, kernel.dims(), stride, padding);
  if (grad_out.dims() != std::vector<std::size_t>{g.out_h, g.out_w, g.out_c}) {
    throw std::invalid_argument("conv2d_input_grad: gradient shape " + shape_string(grad_out.dims()));
  }
  const auto rows = static_cast<Eigen::Index>(g.out_pixels());
  const auto inner = static_cast<Eigen::Index>(g.patch_size());
  const auto cols = static_cast<Eigen::Index>(g.out_c);
  ConstMatrixMap weights(kernel.data().data(), inner, cols);
  ConstMatrixMap dy(grad_out.data().data(), rows, cols);
  Tensor grad_in(input_dims);
  if (g.is_pointwise()) {
    MatrixMap(grad_in.data().data(), rows, inner).noalias() = dy * weights.transpose();
  } else {
    RowMatrix dcols = dy * weights.transpose();
    col2im_accumulate(dcols, g, grad_in);
  }
  return grad_in;
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out, const std::vector<std::size_t>& kernel_dims,
                          std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.dims(), kernel_dims, stride, padding);
  if (grad_out.dims() != std::vector<std::size_t>{g.out_h, g.out_w, g.out_c}) {
    throw std::invalid_argument("conv2d_kernel_grad: gradient shape " + shape_string(grad_out.dims()));
  }
  const auto rows = static_cast<Eigen::Index>(g.out_pixels());
  const auto inner = static_cast<Eigen::Index>(g.patch_size());
  const auto cols = static_cast<Eigen::Index>(g.out_c);
  ConstMatrixMap dy(grad_out.data().data(), rows, cols);
  Tensor grad_k(kernel_dims);
  MatrixMap dk(grad_k.data().data(), inner, cols);
  if (g.is_pointwise()) {
    dk.noalias() = ConstMatrixMap(input.data().data(), rows, inner).transpose() * dy;
  } else {
    dk.noalias() = im2col(input, g).transpose() * dy;
  }
  return grad_k;
}

Tensor resample_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_hwc(input, "resample_bilinear");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resample_bilinear: output size must be positive");
  if (out_h == input.height() && out_w == input.width()) return input;
  const std::size_t c = input.channels();
  const auto ty = resample_taps(input.height(), out_h);
  const auto tx = resample_taps(input.width(), out_w);
  Tensor out({out_h, out_w, c});
  for (std::size_t i = 0; i < out_h; ++i) {
    const auto& [y0, y1, fy] = ty[i];
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto& [x0, x1, fx] = tx[j];
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1.0 - fx) * input.at(y0, x0, k) + fx * input.at(y0, x1, k);
        const double bottom = (1.0 - fx) * input.at(y1, x0, k) + fx * input.at(y1, x1, k);
        out.at(i, j, k) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

Tensor resample_bilinear_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  require_hwc(grad_out, "resample_bilinear_adjoint");
  const std::size_t out_h = grad_out.height(), out_w = grad_out.width(), c = grad_out.channels();
  if (out_h == in_h && out_w == in_w) return grad_out;
  const auto ty = resample_taps(in_h, out_h);
  const auto tx = resample_taps(in_w, out_w);
  Tensor grad_in({in_h, in_w, c});
  for (std::size_t i = 0; i < out_h; ++i) {
    const auto& [y0, y1, fy] = ty[i];
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto& [x0, x1, fx] = tx[j];
      for (std::size_t k = 0; k < c; ++k) {
        const double g = grad_out.at(i, j, k);
        grad_in.at(y0, x0, k) += (1.0 - fy) * (1.0 - fx) * g;
        grad_in.at(y0, x1, k) += (1.0 - fy) * fx * g;
        grad_in.at(y1, x0, k) += fy * (1.0 - fx) * g;
        grad_in.at(y1, x1, k) += fy * fx * g;
      }
    }
  }
  return grad_in;
}

}  // namespace dfusion
