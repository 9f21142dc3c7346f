#pragma once

#include <span>
#include <string>
#include <vector>

#include "dfusion/autodiff.hpp"
#include "dfusion/checkpoint.hpp"
#include "dfusion/rng.hpp"
#include "dfusion/tensor.hpp"

namespace dfusion {

enum class ParamInit {
  kZero,
  kKaimingLeaky,  // N(0, 2 / ((1 + slope^2) * fan_in))
  kLecun,         // N(0, 1 / fan_in)
};

struct ParameterSpec {
  std::string name;
  std::vector<std::size_t> dims;
  ParamInit init = ParamInit::kZero;
  std::size_t fan_in = 1;
};

/// Ordered, uniquely named learnable tensors.
class ParameterSet {
 public:
  ParameterSet() = default;
  /// Draws every tensor according to its spec, in order, from `rng`.
  static ParameterSet initialize(std::span<const ParameterSpec> specs, Rng& rng);

  void add(std::string name, Tensor value);
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const;

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<Tensor> tensors() noexcept { return values_; }
  std::span<const Tensor> tensors() const noexcept { return values_; }

  std::size_t index_of(const std::string& name) const;
  const Tensor& get(const std::string& name) const { return values_[index_of(name)]; }
  Tensor& get(const std::string& name) { return values_[index_of(name)]; }

  /// Records each tensor on `tape` as a variable (trainable) or a constant.
  std::vector<Var> bind(Tape& tape, bool trainable) const;

  /// Checks names and shapes against a layout.
  void require_layout(std::span<const ParameterSpec> specs) const;

  void append_to(Checkpoint& checkpoint, const std::string& prefix) const;
  static ParameterSet from_checkpoint(const Checkpoint& checkpoint, std::span<const ParameterSpec> specs,
                                      const std::string& prefix);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

}  // namespace dfusion
