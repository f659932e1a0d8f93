#pragma once

#include "lorid/mlp.hpp"
#include "lorid/rng.hpp"
#include "lorid/schedule.hpp"
#include "lorid/tensor.hpp"

#include <cstddef>
#include <vector>

namespace lorid {

/// Noise predictor eps_theta(x_t, t). Implementations are immutable after
/// construction and safe for concurrent reads.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Output has the shape of x_t.
  virtual Tensord predict_eps(const Tensord& x_t, int t) const = 0;
};

/// N(mean, covariance) over the flattened sample, with the covariance
/// eigendecomposition cached.
class GaussianPrior {
 public:
  GaussianPrior(Vectord mean, Matrixd covariance);

  static GaussianPrior standard(Eigen::Index dim);
  /// Sample mean and (biased) sample covariance of the rows of `samples`,
  /// where `samples` is (N, ...) and each sample is flattened.
  static GaussianPrior fit(const Tensord& samples);

  Eigen::Index dim() const { return mean_.size(); }
  const Vectord& mean() const { return mean_; }
  const Matrixd& covariance() const { return covariance_; }
  const Vectord& eigenvalues() const { return eigenvalues_; }
  const Matrixd& eigenvectors() const { return eigenvectors_; }
  bool is_diagonal() const { return diagonal_; }

  Vectord sample(Rng& rng) const;

 private:
  Vectord mean_;
  Matrixd covariance_;
  Vectord eigenvalues_;
  Matrixd eigenvectors_;
  bool diagonal_ = false;
};

/// Posterior-mean noise predictor for Gaussian data:
///   E[eps | x_t] = sqrt(1 - ab) (ab S + (1 - ab) I)^-1 (x_t - sqrt(ab) mu)
/// with ab = alpha_bar(t). Makes one-shot recovery the exact MMSE estimator.
class GaussianOracleDenoiser final : public Denoiser {
 public:
  GaussianOracleDenoiser(GaussianPrior prior, Schedule schedule);

  Tensord predict_eps(const Tensord& x_t, int t) const override;
  const GaussianPrior& prior() const { return prior_; }

 private:
  GaussianPrior prior_;
  Schedule schedule_;
};

/// Time conditioning appended to the network input: t/T followed by
/// sin/cos(2^k pi t/T) for k = 0..3.
inline constexpr std::size_t kTimeFeatures = 9;
Vectord time_features(int t, int steps);

/// eps_theta as a small MLP over concat(x_t, time features).
class MlpDenoiser final : public Denoiser {
 public:
  MlpDenoiser(Mlp net, int steps);

  Tensord predict_eps(const Tensord& x_t, int t) const override;
  /// Batched prediction; columns of x_t are samples, ts holds their steps.
  Matrixd predict_batch(const Matrixd& x_t, const std::vector<int>& ts) const;
  /// Network input for a batch (features x batch).
  Matrixd features(const Matrixd& x_t, const std::vector<int>& ts) const;

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }
  int steps() const { return steps_; }
  std::size_t data_dim() const { return net_.output_size(); }

 private:
  Mlp net_;
  int steps_;
};

struct TrainHyperparams {
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::tanh;
  double learning_rate = 1e-3;
  double lr_floor = 1.0;  // final learning rate as a fraction of the initial one
  bool adam = true;
  int epochs = 10;
  std::size_t batch_size = 64;
  int t_min = 1;  // training steps are drawn uniformly from [t_min, t_max]
  int t_max = 0;  // 0 means T
  std::size_t gradient_check_params = 32;
};

struct TrainReport {
  std::vector<double> epoch_losses;
  double final_loss = 0;  // E||eps - eps_theta||^2 over one fresh pass
  double gradient_check_residual = 0;
};

struct TrainedDenoiser {
  MlpDenoiser denoiser;
  TrainReport report;
};

/// Fits eps_theta to E||eps - eps_theta(x_t, t)||^2 with manual backprop.
/// `dataset` is (N, ...). Throws std::runtime_error if the loss diverges.
TrainedDenoiser train_mlp_denoiser(const Tensord& dataset, const Schedule& schedule,
                                   const TrainHyperparams& params, Rng& rng);

}  // namespace lorid
