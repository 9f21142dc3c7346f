#include "dfusion/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfusion {

AdamState::AdamState(std::span<const Tensor> params, AdamOptions options) : options_(options) {
  if (options.learning_rate < 0.0 || options.beta1 < 0.0 || options.beta1 >= 1.0 || options.beta2 < 0.0 ||
      options.beta2 >= 1.0 || options.epsilon <= 0.0) {
    throw std::invalid_argument("AdamState: hyperparameters out of range");
  }
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Tensor::zeros_like(p));
    v_.push_back(Tensor::zeros_like(p));
  }
}

void AdamState::apply(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("adam_step: expected " + std::to_string(m_.size()) + " tensors, got " +
                                std::to_string(params.size()) + " params and " + std::to_string(grads.size()) +
                                " grads");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (!params[i].same_shape(m_[i]) || !grads[i].same_shape(m_[i])) {
      throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

}  // namespace dfusion
