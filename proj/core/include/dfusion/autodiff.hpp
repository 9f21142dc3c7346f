#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "dfusion/tensor.hpp"

namespace dfusion {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar loss with respect to the differentiable leaves of a tape.
class Gradients {
 public:
  bool contains(Var v) const { return grads_.count(v.id()) != 0; }
  const Tensor& operator[](Var v) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Ordered record of primitive operations for reverse-mode differentiation.
/// Confined to a single thread and a single training step.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf (a parameter or an input we want gradients for).
  Var variable(Tensor value);
  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Appends an operation result. `backward` runs only if some input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Adds `grad` into the pending gradient of `target`; no-op for constants.
  void accumulate(Var target, const Tensor& grad);
  void accumulate(Var target, Tensor&& grad);

  /// Reverse sweep from a one-element loss. Gradients of every differentiable leaf
  /// reachable from the loss are returned (zero tensors for unreachable leaves).
  Gradients backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

inline Gradients backward(Tape& tape, Var loss) { return tape.backward(loss); }

/// Differentiable primitives. Inputs must live on the same tape.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// scale * a + shift, elementwise.
Var affine(Var a, double scale, double shift = 0.0);
Var square(Var a);
Var abs(Var a);
Var leaky_relu(Var a, double negative_slope = 0.2);
Var tanh(Var a);
/// Sum of all elements, shape [1].
Var sum(Var a);
Var mean(Var a);
/// Square root of a one-element tensor. The derivative at 0 is taken as 0.
Var sqrt_scalar(Var a);

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
/// Adds a per-channel bias [C] to an HWC tensor.
Var add_channel_bias(Var input, Var bias);
Var concat_channels(Var a, Var b);
Var resample_bilinear(Var input, std::size_t out_h, std::size_t out_w);
/// [n, k] x [k, m] -> [n, m].
Var matmul(Var a, Var b);
/// Reinterprets the value with new dimensions of the same element count.
Var reshape(Var a, std::vector<std::size_t> dims);

}  // namespace ad

inline constexpr double kLeakySlope = 0.2;

}  // namespace dfusion
