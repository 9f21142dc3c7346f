#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfusion/tensor.hpp"

namespace dfusion {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed list of parameter tensors.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const Tensor> params, AdamOptions options);

  const AdamOptions& options() const noexcept { return options_; }
  std::uint64_t step() const noexcept { return step_; }
  const std::vector<Tensor>& first_moment() const noexcept { return m_; }
  const std::vector<Tensor>& second_moment() const noexcept { return v_; }

  /// Bias-corrected Adam update in place; increments the step counter.
  /// Throws std::invalid_argument if params/grads do not match the state's shapes.
  void apply(std::span<Tensor> params, std::span<const Tensor> grads);

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  state.apply(params, grads);
}

}  // namespace dfusion
