#pragma once

#include "lorid/rng.hpp"
#include "lorid/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace lorid {

enum class Activation { tanh, relu };

/// Fully connected network with a linear output layer. Batches are passed
/// column-wise: input is (in_features x batch).
class Mlp {
 public:
  struct Layer {
    Matrixd weight;  // out x in
    Vectord bias;
  };

  struct Cache {
    std::vector<Matrixd> inputs;       // input to each layer
    std::vector<Matrixd> preactivations;
  };

  struct Gradients {
    std::vector<Matrixd> weight;
    std::vector<Vectord> bias;
    Matrixd input;  // d loss / d network input
  };

  Mlp() = default;
  /// sizes = {in, hidden..., out}; Xavier-uniform weights, zero biases.
  Mlp(const std::vector<std::size_t>& sizes, Activation activation, Rng& rng);
  Mlp(std::vector<Layer> layers, Activation activation);

  Matrixd forward(const Matrixd& input) const;
  Matrixd forward(const Matrixd& input, Cache& cache) const;
  /// Backpropagates d loss / d output through the cached forward pass.
  Gradients backward(const Cache& cache, const Matrixd& grad_output) const;

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;
  /// Flat parameter view in layer order, weights (column-major) then bias.
  double& parameter(std::size_t index);
  static double gradient_entry(const Gradients& g, std::size_t index);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Activation activation() const { return activation_; }
  bool all_finite() const;

 private:
  std::vector<Layer> layers_;
  Activation activation_ = Activation::tanh;
};

/// Adam with bias correction; plain SGD when `adam` is false.
class Optimizer {
 public:
  Optimizer(const Mlp& net, double learning_rate, bool adam = true);
  void step(Mlp& net, const Mlp::Gradients& grads);
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  bool adam_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long step_count_ = 0;
  std::vector<Matrixd> mw_, vw_;
  std::vector<Vectord> mb_, vb_;
};

/// Relative error ||g_a - g_fd|| / (||g_a|| + ||g_fd||) between analytic
/// gradients and central finite differences over the probed parameters.
/// `loss` must evaluate the same objective the analytic gradients came from.
double finite_difference_check(Mlp& net, const std::function<double()>& loss,
                               const Mlp::Gradients& analytic,
                               std::span<const std::size_t> indices,
                               double step = 1e-5);

/// Cosine annealing from `base` at epoch 0 to `base * floor` at the last epoch.
double cosine_learning_rate(double base, double floor, int epoch, int epochs);

/// Evenly spread probe indices over all parameters.
std::vector<std::size_t> probe_indices(const Mlp& net, std::size_t count);

}  // namespace lorid
