#include "dfusion/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfusion/autodiff.hpp"

namespace dfusion {

ParameterSet ParameterSet::initialize(std::span<const ParameterSpec> specs, Rng& rng) {
  ParameterSet set;
  for (const ParameterSpec& spec : specs) {
    Tensor t(spec.dims);
    double stddev = 0.0;
    switch (spec.init) {
      case ParamInit::kZero:
        break;
      case ParamInit::kKaimingLeaky:
        stddev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * static_cast<double>(spec.fan_in)));
        break;
      case ParamInit::kLecun:
        stddev = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
        break;
    }
    if (stddev > 0.0) {
      for (double& v : t.data()) v = stddev * rng.normal();
    }
    set.add(spec.name, std::move(t));
  }
  return set;
}

void ParameterSet::add(std::string name, Tensor value) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw std::invalid_argument("ParameterSet: duplicate name '" + name + "'");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("ParameterSet: no parameter '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<Var> ParameterSet::bind(Tape& tape, bool trainable) const {
  std::vector<Var> vars;
  vars.reserve(values_.size());
  for (const Tensor& t : values_) vars.push_back(trainable ? tape.variable(t) : tape.constant(t));
  return vars;
}

void ParameterSet::require_layout(std::span<const ParameterSpec> specs) const {
  if (specs.size() != values_.size()) {
    throw std::invalid_argument("ParameterSet: expected " + std::to_string(specs.size()) + " tensors, have " +
                                std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (names_[i] != specs[i].name || values_[i].dims() != specs[i].dims) {
      throw std::invalid_argument("ParameterSet: tensor " + std::to_string(i) + " is '" + names_[i] + "' " +
                                  shape_string(values_[i].dims()) + ", expected '" + specs[i].name + "' " +
                                  shape_string(specs[i].dims));
    }
  }
}

void ParameterSet::append_to(Checkpoint& checkpoint, const std::string& prefix) const {
  for (std::size_t i = 0; i < values_.size(); ++i) checkpoint.add(prefix + names_[i], values_[i]);
}

ParameterSet ParameterSet::from_checkpoint(const Checkpoint& checkpoint, std::span<const ParameterSpec> specs,
                                           const std::string& prefix) {
  ParameterSet set;
  for (const ParameterSpec& spec : specs) {
    const Tensor& t = checkpoint.get(prefix + spec.name);
    if (t.dims() != spec.dims) {
      throw std::invalid_argument("checkpoint entry '" + prefix + spec.name + "' has shape " + shape_string(t.dims()) +
                                  ", expected " + shape_string(spec.dims));
    }
    set.add(spec.name, t);
  }
  return set;
}

}  // namespace dfusion
