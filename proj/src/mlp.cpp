#include "lorid/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lorid {

Mlp::Mlp(const std::vector<std::size_t>& sizes, Activation activation, Rng& rng)
    : activation_(activation) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp needs input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(sizes[i]);
    const auto out = static_cast<Eigen::Index>(sizes[i + 1]);
    if (in == 0 || out == 0) throw std::invalid_argument("mlp layer size must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    Layer layer{Matrixd(out, in), Vectord::Zero(out)};
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = uniform(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<Layer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw std::invalid_argument("mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weight.rows())
      throw std::invalid_argument("mlp bias size mismatch");
    if (i && layers_[i].weight.cols() != layers_[i - 1].weight.rows())
      throw std::invalid_argument("mlp layer sizes do not chain");
  }
}

namespace {

Matrixd activate(const Matrixd& z, Activation a) {
  return a == Activation::tanh ? Matrixd(z.array().tanh())
                               : Matrixd(z.array().max(0.0));
}

Matrixd activation_derivative(const Matrixd& z, Activation a) {
  if (a == Activation::tanh) return (1.0 - z.array().tanh().square()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

}  // namespace

Matrixd Mlp::forward(const Matrixd& input) const {
  Cache cache;
  return forward(input, cache);
}

Matrixd Mlp::forward(const Matrixd& input, Cache& cache) const {
  if (static_cast<std::size_t>(input.rows()) != input_size())
    throw std::invalid_argument("mlp input has " + std::to_string(input.rows()) +
                                " features, expected " + std::to_string(input_size()));
  cache.inputs.clear();
  cache.preactivations.clear();
  Matrixd h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.inputs.push_back(h);
    Matrixd z = layers_[i].weight * h;
    z.colwise() += layers_[i].bias;
    cache.preactivations.push_back(z);
    h = (i + 1 == layers_.size()) ? z : activate(z, activation_);
  }
  return h;
}

Mlp::Gradients Mlp::backward(const Cache& cache, const Matrixd& grad_output) const {
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Matrixd delta = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 != layers_.size())
      delta = delta.cwiseProduct(activation_derivative(cache.preactivations[k], activation_));
    g.weight[k] = delta * cache.inputs[k].transpose();
    g.bias[k] = delta.rowwise().sum();
    delta = layers_[k].weight.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

std::size_t Mlp::input_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t Mlp::output_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double& Mlp::parameter(std::size_t index) {
  for (auto& l : layers_) {
    const auto w = static_cast<std::size_t>(l.weight.size());
    if (index < w) return l.weight.data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (index < b) return l.bias.data()[index];
    index -= b;
  }
  throw std::out_of_range("mlp parameter index out of range");
}

double Mlp::gradient_entry(const Gradients& g, std::size_t index) {
  for (std::size_t k = 0; k < g.weight.size(); ++k) {
    const auto w = static_cast<std::size_t>(g.weight[k].size());
    if (index < w) return g.weight[k].data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(g.bias[k].size());
    if (index < b) return g.bias[k].data()[index];
    index -= b;
  }
  throw std::out_of_range("gradient index out of range");
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Optimizer::Optimizer(const Mlp& net, double learning_rate, bool adam)
    : lr_(learning_rate), adam_(adam) {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
  for (const auto& l : net.layers()) {
    mw_.push_back(Matrixd::Zero(l.weight.rows(), l.weight.cols()));
    vw_.push_back(Matrixd::Zero(l.weight.rows(), l.weight.cols()));
    mb_.push_back(Vectord::Zero(l.bias.size()));
    vb_.push_back(Vectord::Zero(l.bias.size()));
  }
}

void Optimizer::step(Mlp& net, const Mlp::Gradients& grads) {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  auto& layers = net.layers();
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    if (!adam_) {
      param -= lr_ * g;
      return;
    }
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t k = 0; k < grads.weight.size(); ++k) {
    update(layers[k].weight, mw_[k], vw_[k], grads.weight[k]);
    update(layers[k].bias, mb_[k], vb_[k], grads.bias[k]);
  }
}

double finite_difference_check(Mlp& net, const std::function<double()>& loss,
                               const Mlp::Gradients& analytic,
                               std::span<const std::size_t> indices, double step) {
  double diff = 0, norm_a = 0, norm_fd = 0;
  for (std::size_t idx : indices) {
    double& p = net.parameter(idx);
    const double saved = p;
    p = saved + step;
    const double up = loss();
    p = saved - step;
    const double down = loss();
    p = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = Mlp::gradient_entry(analytic, idx);
    diff += (a - fd) * (a - fd);
    norm_a += a * a;
    norm_fd += fd * fd;
  }
  const double denom = std::sqrt(norm_a) + std::sqrt(norm_fd);
  return denom > 0 ? std::sqrt(diff) / denom : 0.0;
}

double cosine_learning_rate(double base, double floor, int epoch, int epochs) {
  if (epochs <= 1) return base;
  const double phase = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return base * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase)));
}

std::vector<std::size_t> probe_indices(const Mlp& net, std::size_t count) {
  const std::size_t total = net.parameter_count();
  std::vector<std::size_t> out;
  if (total == 0 || count == 0) return out;
  count = std::min(count, total);
  for (std::size_t i = 0; i < count; ++i) out.push_back(i * total / count + (total / count) / 2);
  return out;
}

}  // namespace lorid
