#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dfusion {

/// Dense row-major array of doubles. Images use HWC layout, convolution
/// kernels use [kh, kw, c_in, c_out].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // HWC accessors; require rank 3.
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }

  std::size_t height() const { return dims_.at(0); }
  std::size_t width() const { return dims_.at(1); }
  std::size_t channels() const { return dims_.at(2); }

  bool same_shape(const Tensor& other) const noexcept { return dims_ == other.dims_; }

  /// Value of a one-element tensor.
  double item() const;

  Tensor reshaped(std::vector<std::size_t> dims) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& dims);
bool all_finite(const Tensor& t);
/// Throws std::domain_error naming `what` if any value is NaN or infinite.
void require_finite(const Tensor& t, const char* what);
double max_abs_difference(const Tensor& a, const Tensor& b);

// Channel plumbing on HWC tensors.
Tensor slice_channels(const Tensor& image, std::size_t first, std::size_t count);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor crop(const Tensor& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

/// Discrete cross-correlation. input HWC, kernel [kh, kw, c_in, c_out],
/// zero padding. Output spatial size floor((H + 2p - kh) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

/// Gradients of conv2d given dL/d(output).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel, const std::vector<std::size_t>& input_dims,
                         std::size_t stride, std::size_t padding);
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& grad_out, const std::vector<std::size_t>& kernel_dims,
                          std::size_t stride, std::size_t padding);

/// Bilinear resampling of an HWC tensor with the corner-aligned convention:
/// output pixel (i, j) samples source position (i * (H-1)/(outH-1), j * (W-1)/(outW-1)).
Tensor resample_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
/// Adjoint of resample_bilinear: scatters an output-space gradient back to input space.
Tensor resample_bilinear_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

}  // namespace dfusion
