#include "lorid/denoiser.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace lorid {

GaussianPrior::GaussianPrior(Vectord mean, Matrixd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const Eigen::Index d = mean_.size();
  if (d == 0) throw std::invalid_argument("gaussian prior needs dim >= 1");
  if (covariance_.rows() != d || covariance_.cols() != d)
    throw std::invalid_argument("covariance shape does not match mean");
  if (!covariance_.allFinite() || !mean_.allFinite())
    throw std::invalid_argument("gaussian prior has non-finite entries");
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, covariance_.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("covariance must be symmetric");

  const Matrixd off = covariance_ - Matrixd(covariance_.diagonal().asDiagonal());
  diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  if (diagonal_) {
    eigenvalues_ = covariance_.diagonal();
    eigenvectors_ = Matrixd::Identity(d, d);
  } else {
    Eigen::SelfAdjointEigenSolver<Matrixd> eig(covariance_);
    eigenvalues_ = eig.eigenvalues();
    eigenvectors_ = eig.eigenvectors();
  }
  const double scale = std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
  if (eigenvalues_.minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("covariance is not positive semi-definite");
  eigenvalues_ = eigenvalues_.cwiseMax(0.0);
}

GaussianPrior GaussianPrior::standard(Eigen::Index dim) {
  return GaussianPrior(Vectord::Zero(dim), Matrixd::Identity(dim, dim));
}

GaussianPrior GaussianPrior::fit(const Tensord& samples) {
  const std::size_t n = samples.dim(0);
  const std::size_t d = samples.size() / n;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      rows(samples.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Vectord mean = rows.colwise().mean().transpose();
  const Matrixd centered = rows.rowwise() - mean.transpose();
  Matrixd cov = centered.transpose() * centered / static_cast<double>(n);
  cov = 0.5 * (cov + cov.transpose());
  return GaussianPrior(mean, cov);
}

Vectord GaussianPrior::sample(Rng& rng) const {
  const Vectord z = standard_normal(dim(), rng);
  if (diagonal_) return mean_ + eigenvalues_.cwiseSqrt().cwiseProduct(z);
  return mean_ + eigenvectors_ * eigenvalues_.cwiseSqrt().cwiseProduct(z);
}

GaussianOracleDenoiser::GaussianOracleDenoiser(GaussianPrior prior, Schedule schedule)
    : prior_(std::move(prior)), schedule_(std::move(schedule)) {}

Tensord GaussianOracleDenoiser::predict_eps(const Tensord& x_t, int t) const {
  schedule_.check_step(t);
  if (static_cast<Eigen::Index>(x_t.size()) != prior_.dim())
    throw std::invalid_argument("oracle denoiser dimension mismatch");
  const double ab = schedule_.alpha_bar(t);
  const Vectord gain =
      (ab * prior_.eigenvalues().array() + (1.0 - ab)).inverse().matrix();
  assert(gain.allFinite());
  const Vectord r = x_t.values() - std::sqrt(ab) * prior_.mean();
  Vectord eps;
  if (prior_.is_diagonal()) {
    eps = std::sqrt(1.0 - ab) * gain.cwiseProduct(r);
  } else {
    const Matrixd& q = prior_.eigenvectors();
    eps = std::sqrt(1.0 - ab) * (q * gain.cwiseProduct(q.transpose() * r));
  }
  return Tensord(x_t.shape(), std::move(eps));
}

Vectord time_features(int t, int steps) {
  const double tau = static_cast<double>(t) / static_cast<double>(steps);
  Vectord f(static_cast<Eigen::Index>(kTimeFeatures));
  f[0] = tau;
  for (int k = 0; k < 4; ++k) {
    const double w = std::ldexp(std::numbers::pi, k) * tau;
    f[1 + 2 * k] = std::sin(w);
    f[2 + 2 * k] = std::cos(w);
  }
  return f;
}

MlpDenoiser::MlpDenoiser(Mlp net, int steps) : net_(std::move(net)), steps_(steps) {
  if (steps < 1) throw std::invalid_argument("denoiser needs T >= 1");
  if (net_.input_size() != net_.output_size() + kTimeFeatures)
    throw std::invalid_argument("mlp denoiser input must be data dim + time features");
}

Matrixd MlpDenoiser::features(const Matrixd& x_t, const std::vector<int>& ts) const {
  if (static_cast<std::size_t>(x_t.cols()) != ts.size())
    throw std::invalid_argument("one step per batch column required");
  const Eigen::Index d = x_t.rows();
  Matrixd in(d + static_cast<Eigen::Index>(kTimeFeatures), x_t.cols());
  in.topRows(d) = x_t;
  for (Eigen::Index c = 0; c < x_t.cols(); ++c)
    in.col(c).tail(static_cast<Eigen::Index>(kTimeFeatures)) =
        time_features(ts[static_cast<std::size_t>(c)], steps_);
  return in;
}

Matrixd MlpDenoiser::predict_batch(const Matrixd& x_t, const std::vector<int>& ts) const {
  return net_.forward(features(x_t, ts));
}

Tensord MlpDenoiser::predict_eps(const Tensord& x_t, int t) const {
  if (t < 1 || t > steps_) throw std::out_of_range("denoiser step out of range");
  if (x_t.size() != data_dim()) throw std::invalid_argument("mlp denoiser dimension mismatch");
  const Matrixd out = predict_batch(x_t.values(), {t});
  return Tensord(x_t.shape(), out.col(0));
}

namespace {

struct NoisyBatch {
  Matrixd x_t;
  Matrixd eps;
  std::vector<int> ts;
};

NoisyBatch make_batch(const Matrixd& data, std::span<const std::size_t> cols,
                      const Schedule& schedule, int t_min, int t_max, Rng& rng) {
  std::uniform_int_distribution<int> step(t_min, t_max);
  NoisyBatch b;
  const auto n = static_cast<Eigen::Index>(cols.size());
  b.x_t.resize(data.rows(), n);
  b.eps.resize(data.rows(), n);
  b.ts.resize(cols.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    const int t = step(rng);
    const double ab = schedule.alpha_bar(t);
    b.ts[static_cast<std::size_t>(c)] = t;
    b.eps.col(c) = standard_normal(data.rows(), rng);
    b.x_t.col(c) = std::sqrt(ab) * data.col(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(c)])) +
                   std::sqrt(1.0 - ab) * b.eps.col(c);
  }
  return b;
}

// Mean over the batch of ||eps - eps_theta||^2.
double batch_loss(const MlpDenoiser& den, const NoisyBatch& b) {
  const Matrixd r = den.predict_batch(b.x_t, b.ts) - b.eps;
  return r.squaredNorm() / static_cast<double>(b.ts.size());
}

}  // namespace

TrainedDenoiser train_mlp_denoiser(const Tensord& dataset, const Schedule& schedule,
                                   const TrainHyperparams& params, Rng& rng) {
  if (dataset.order() < 2 || dataset.dim(0) == 0)
    throw std::invalid_argument("training dataset must be (N, ...) with N >= 1");
  const std::size_t n = dataset.dim(0);
  const std::size_t d = dataset.size() / n;
  const int t_max = params.t_max == 0 ? schedule.steps() : params.t_max;
  schedule.check_step(params.t_min);
  schedule.check_step(t_max);
  if (params.t_min > t_max) throw std::invalid_argument("t_min exceeds t_max");
  if (params.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");

  // Columns are samples.
  const Matrixd data = Eigen::Map<const Matrixd>(dataset.values().data(),
                                                 static_cast<Eigen::Index>(d),
                                                 static_cast<Eigen::Index>(n));

  std::vector<std::size_t> sizes{d + kTimeFeatures};
  sizes.insert(sizes.end(), params.hidden.begin(), params.hidden.end());
  sizes.push_back(d);
  MlpDenoiser den(Mlp(sizes, params.activation, rng), schedule.steps());
  TrainReport report;

  {
    std::vector<std::size_t> cols(std::min<std::size_t>(n, 16));
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    const NoisyBatch probe = make_batch(data, cols, schedule, params.t_min, t_max, rng);
    Mlp::Cache cache;
    const Matrixd out = den.network().forward(den.features(probe.x_t, probe.ts), cache);
    const Matrixd grad_out = 2.0 * (out - probe.eps) / static_cast<double>(cols.size());
    const auto grads = den.network().backward(cache, grad_out);
    const auto idx = probe_indices(den.network(), params.gradient_check_params);
    report.gradient_check_residual = finite_difference_check(
        den.network(), [&] { return batch_loss(den, probe); }, grads, idx);
  }

  Optimizer opt(den.network(), params.learning_rate, params.adam);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    opt.set_learning_rate(
        cosine_learning_rate(params.learning_rate, params.lr_floor, epoch, params.epochs));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += params.batch_size) {
      const std::size_t len = std::min(params.batch_size, n - start);
      const NoisyBatch b = make_batch(data, std::span(order).subspan(start, len),
                                      schedule, params.t_min, t_max, rng);
      Mlp::Cache cache;
      const Matrixd out = den.network().forward(den.features(b.x_t, b.ts), cache);
      const Matrixd resid = out - b.eps;
      const double loss = resid.squaredNorm() / static_cast<double>(len);
      if (!std::isfinite(loss))
        throw std::runtime_error("denoiser training diverged at epoch " +
                                 std::to_string(epoch));
      opt.step(den.network(),
               den.network().backward(cache, 2.0 * resid / static_cast<double>(len)));
      total += loss;
      ++batches;
    }
    report.epoch_losses.push_back(total / static_cast<double>(batches));
  }
  if (!den.network().all_finite())
    throw std::runtime_error("denoiser training produced non-finite parameters");

  double total = 0;
  for (std::size_t start = 0; start < n; start += 256) {
    const std::size_t len = std::min<std::size_t>(256, n - start);
    const NoisyBatch b = make_batch(data, std::span(order).subspan(start, len), schedule,
                                    params.t_min, t_max, rng);
    total += batch_loss(den, b) * static_cast<double>(len);
  }
  report.final_loss = total / static_cast<double>(n);
  return {std::move(den), std::move(report)};
}

}  // namespace lorid
