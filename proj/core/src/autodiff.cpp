#include "dfusion/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfusion {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var::value on an unbound variable");
  return tape_->value(*this);
}

const Tensor& Gradients::operator[](Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw std::invalid_argument("Gradients: variable " + std::to_string(v.id()) + " not tracked");
  return it->second;
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

void Tape::accumulate(Var target, const Tensor& grad) {
  check_owned(target);
  Node& node = nodes_[target.id()];
  if (!node.requires_grad) return;
  if (!grad.same_shape(node.value)) {
    throw std::logic_error("Tape::accumulate: gradient shape " + shape_string(grad.dims()) + " vs value " +
                           shape_string(node.value.dims()));
  }
  if (node.grad.empty()) {
    node.grad = grad;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) node.grad[i] += grad[i];
}

void Tape::accumulate(Var target, Tensor&& grad) {
  check_owned(target);
  Node& node = nodes_[target.id()];
  if (!node.requires_grad) return;
  if (node.grad.empty() && grad.same_shape(node.value)) {
    node.grad = std::move(grad);
    return;
  }
  accumulate(target, static_cast<const Tensor&>(grad));
}

Gradients Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id()].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(nodes_[loss.id()].value.dims()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss.id()].grad = Tensor(nodes_[loss.id()].value.dims(), 1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.is_leaf || !node.requires_grad || node.grad.empty()) continue;
    Tensor grad = std::move(node.grad);
    node.grad = Tensor();
    node.backward(grad, *this);
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (!node.is_leaf || !node.requires_grad) continue;
    Tensor g = node.grad.empty() ? Tensor::zeros_like(node.value) : std::move(node.grad);
    require_finite(g, "backward");
    out.grads_.emplace(i, std::move(g));
    node.grad = Tensor();
  }
  return out;
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw std::invalid_argument("Var does not belong to this tape");
}

namespace ad {

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw std::invalid_argument("ad: operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = Tensor::zeros_like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "ad::add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "ad::sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, map(g, [](double v) { return -v; }));
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "ad::mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    if (t.requires_grad(a)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      t.accumulate(a, std::move(ga));
    }
    if (t.requires_grad(b)) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      t.accumulate(b, std::move(gb));
    }
  });
}

Var affine(Var a, double scale, double shift) {
  Tape& tape = *a.tape();
  return tape.record(map(a.value(), [=](double v) { return scale * v + shift; }), {a},
                     [a, scale](const Tensor& g, Tape& t) { t.accumulate(a, map(g, [=](double v) { return scale * v; })); });
}

Var square(Var a) {
  Tape& tape = *a.tape();
  return tape.record(map(a.value(), [](double v) { return v * v; }), {a}, [a](const Tensor& g, Tape& t) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 2.0 * a.value()[i];
    t.accumulate(a, std::move(ga));
  });
}

Var abs(Var a) {
  Tape& tape = *a.tape();
  return tape.record(map(a.value(), [](double v) { return std::abs(v); }), {a}, [a](const Tensor& g, Tape& t) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = a.value()[i];
      ga[i] *= x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    t.accumulate(a, std::move(ga));
  });
}

Var leaky_relu(Var a, double negative_slope) {
  Tape& tape = *a.tape();
  Tensor out = map(a.value(), [=](double v) { return v > 0.0 ? v : negative_slope * v; });
  return tape.record(std::move(out), {a}, [a, negative_slope](const Tensor& g, Tape& t) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= a.value()[i] > 0.0 ? 1.0 : negative_slope;
    t.accumulate(a, std::move(ga));
  });
}

Var tanh(Var a) {
  Tape& tape = *a.tape();
  return tape.record(map(a.value(), [](double v) { return std::tanh(v); }), {a}, [a](const Tensor& g, Tape& t) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double y = std::tanh(a.value()[i]);
      ga[i] *= 1.0 - y * y;
    }
    t.accumulate(a, std::move(ga));
  });
}

Var sum(Var a) {
  Tape& tape = *a.tape();
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return tape.record(Tensor::scalar(total), {a}, [a](const Tensor& g, Tape& t) {
    t.accumulate(a, Tensor(a.value().dims(), g[0]));
  });
}

Var mean(Var a) { return affine(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sqrt_scalar(Var a) {
  Tape& tape = *a.tape();
  const double x = a.value().item();
  if (x < 0.0) throw std::domain_error("ad::sqrt_scalar: negative argument");
  const double root = std::sqrt(x);
  return tape.record(Tensor::scalar(root), {a}, [a, root](const Tensor& g, Tape& t) {
    t.accumulate(a, Tensor::scalar(root > 0.0 ? g[0] / (2.0 * root) : 0.0));
  });
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  Tape& tape = tape_of(input, kernel);
  Tensor out = dfusion::conv2d(input.value(), kernel.value(), stride, padding);
  return tape.record(std::move(out), {input, kernel}, [=](const Tensor& g, Tape& t) {
    if (t.requires_grad(input)) {
      t.accumulate(input, conv2d_input_grad(g, kernel.value(), input.value().dims(), stride, padding));
    }
    if (t.requires_grad(kernel)) {
      t.accumulate(kernel, conv2d_kernel_grad(input.value(), g, kernel.value().dims(), stride, padding));
    }
  });
}

Var add_channel_bias(Var input, Var bias) {
  Tape& tape = tape_of(input, bias);
  const Tensor& x = input.value();
  const Tensor& b = bias.value();
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.channels()) {
    throw std::invalid_argument("ad::add_channel_bias: bias " + shape_string(b.dims()) + " does not match input " +
                                shape_string(x.dims()));
  }
  const std::size_t c = x.channels();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
  return tape.record(std::move(out), {input, bias}, [input, bias, c](const Tensor& g, Tape& t) {
    t.accumulate(input, g);
    if (t.requires_grad(bias)) {
      Tensor gb({c});
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
      t.accumulate(bias, std::move(gb));
    }
  });
}

Var concat_channels(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  Tensor out = dfusion::concat_channels(a.value(), b.value());
  const std::size_t ca = a.value().channels();
  const std::size_t cb = b.value().channels();
  return tape.record(std::move(out), {a, b}, [a, b, ca, cb](const Tensor& g, Tape& t) {
    if (t.requires_grad(a)) t.accumulate(a, slice_channels(g, 0, ca));
    if (t.requires_grad(b)) t.accumulate(b, slice_channels(g, ca, cb));
  });
}

Var resample_bilinear(Var input, std::size_t out_h, std::size_t out_w) {
  Tape& tape = *input.tape();
  Tensor out = dfusion::resample_bilinear(input.value(), out_h, out_w);
  const std::size_t in_h = input.value().height();
  const std::size_t in_w = input.value().width();
  return tape.record(std::move(out), {input}, [input, in_h, in_w](const Tensor& g, Tape& t) {
    t.accumulate(input, resample_bilinear_adjoint(g, in_h, in_w));
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
    throw std::invalid_argument("ad::matmul: incompatible shapes " + shape_string(x.dims()) + " x " +
                                shape_string(y.dims()));
  }
  const std::size_t n = x.dim(0), k = x.dim(1), m = y.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += xv * y[p * m + j];
    }
  return tape.record(std::move(out), {a, b}, [a, b, n, k, m](const Tensor& g, Tape& t) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (t.requires_grad(a)) {
      Tensor ga({n, k});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * y[p * m + j];
          ga[i * k + p] = acc;
        }
      t.accumulate(a, std::move(ga));
    }
    if (t.requires_grad(b)) {
      Tensor gb({k, m});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += xv * g[i * m + j];
        }
      t.accumulate(b, std::move(gb));
    }
  });
}

Var reshape(Var a, std::vector<std::size_t> dims) {
  Tape& tape = *a.tape();
  Tensor out = a.value().reshaped(std::move(dims));
  return tape.record(std::move(out), {a}, [a](const Tensor& g, Tape& t) {
    t.accumulate(a, g.reshaped(a.value().dims()));
  });
}

}  // namespace ad
}  // namespace dfusion
