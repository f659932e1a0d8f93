#pragma once

#include "lorid/denoiser.hpp"
#include "lorid/rng.hpp"
#include "lorid/schedule.hpp"
#include "lorid/tensor.hpp"
#include "lorid/tucker.hpp"

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace lorid {

/// MMSE of a standard Gaussian input through a Gaussian channel: 1/(1+snr).
double mmse_gaussian(double snr);

/// Per-dimension MMSE of an N(mu, S) input: mean_i lambda_i / (1 + snr lambda_i).
double mmse_gaussian_spectrum(double snr, const Vectord& eigenvalues);

/// MMSE of a uniform {-1, +1} input:
///   1 - (2 pi)^-1/2 ∫ exp(-y^2/2) tanh(snr - sqrt(snr) y) dy,
/// by composite Simpson on [-12, 12] with 4801 nodes. Throws
/// std::runtime_error if halving the node count moves the result by > 1e-9.
double mmse_binary(double snr);

double effective_snr(const Schedule& schedule, int t);

/// True when seq[i+1] <= seq[i] + tol for every i.
bool non_increasing(const std::vector<double>& seq, double tol = 0.0);
/// Largest seq[i+1] - seq[i] (negative when strictly decreasing).
double max_increase(const std::vector<double>& seq);

struct CurvePoint {
  int loops = 1;
  int t_over_L = 0;
  int effective_t = 0;  // loops * floor(t / loops)
  double value = 0;     // loops * mmse_gaussian(snr(t_over_L))
};

std::vector<CurvePoint> loop_bound_curve(const Schedule& schedule, int effective_t,
                                         const std::vector<int>& loop_values);

struct GaussianDist {
  Vectord mean;
  Matrixd cov;
};

/// Closed-form KL(p || q) between Gaussians; throws on non-PD covariances.
double kl_gaussian(const GaussianDist& p, const GaussianDist& q);

/// Pushes p through the forward process to step t: N(sqrt(ab) mu, ab S + (1-ab) I).
GaussianDist forward_gaussian(const GaussianDist& p, const Schedule& schedule, int t);

double kl_gaussian_forward(const GaussianDist& p1, const GaussianDist& p2,
                           const Schedule& schedule, int t);

/// Random Gaussian with N(0, 1) mean entries and covariance A A^T / d + 0.1 I.
GaussianDist random_gaussian(Eigen::Index dim, Rng& rng);

/// KL between the forward marginals at each step in `steps`.
std::vector<double> kl_forward_sequence(const GaussianDist& p1, const GaussianDist& p2,
                                        const Schedule& schedule, const std::vector<int>& steps);

/// Uniform grid on [lo, hi] with `nodes` points; densities live on it.
struct Grid1D {
  double lo = -12;
  double hi = 12;
  std::size_t nodes = 1201;

  double step() const { return (hi - lo) / static_cast<double>(nodes - 1); }
  double at(std::size_t i) const { return lo + step() * static_cast<double>(i); }
  Vectord points() const;
  /// Trapezoid weights.
  Vectord weights() const;
};

Vectord tabulate_density(const Grid1D& grid, const std::function<double(double)>& pdf);

/// Density of sqrt(ab) X + sqrt(1-ab) Z on the grid by quadrature.
/// Throws std::runtime_error when the result integrates to 1 only within > 1e-6.
Vectord forward_density(const Grid1D& grid, const Vectord& density,
                        const Schedule& schedule, int t);

double grid_kl(const Grid1D& grid, const Vectord& p, const Vectord& q);

double kl_quadrature_forward(const Grid1D& grid, const Vectord& density1,
                             const Vectord& density2, const Schedule& schedule, int t);

std::vector<double> kl_quadrature_sequence(const Grid1D& grid, const Vectord& density1,
                                           const Vectord& density2, const Schedule& schedule,
                                           const std::vector<int>& steps);

/// Rescales a tabulated density so it integrates to 1 under the grid weights.
Vectord normalize_density(const Grid1D& grid, Vectord density);

/// Five smooth non-Gaussian 1-D density pairs, normalized on the grid:
/// bimodal vs normal, Laplace vs normal, logistic vs wide normal,
/// skewed mixture vs shifted Laplace, raised cosine vs wide normal.
std::vector<std::pair<Vectord, Vectord>> reference_density_pairs(const Grid1D& grid);

/// Random Tucker-structured image basis: orthonormal factors with the given
/// ranks drawn from Gaussian matrices.
TuckerBasis random_tucker_basis(const TensorizationLayout& layout,
                                const std::vector<std::size_t>& ranks, Rng& rng);

/// N(0, signal^2 P + noise^2 I) over images, where P is the TF projector of
/// `basis`. Data drawn from it is low Tucker rank up to isotropic noise.
GaussianPrior tucker_gaussian_prior(const TuckerBasis& basis, double signal, double noise);

enum class Recovery { one_shot, ancestral };

/// Monte Carlo setting for the bound checks. Errors are per-dimension mean
/// squared errors; norms (||eps_a||, E_Tucker, ||TF(eps_a)||) are reported as
/// root-mean-square per dimension so both live on the same scale.
struct BoundSetup {
  const GaussianPrior* prior = nullptr;
  const Denoiser* denoiser = nullptr;
  const Schedule* schedule = nullptr;
  Vectord eps_a;                       // empty means no perturbation
  const TuckerBasis* basis = nullptr;  // TF is applied before diffusion when set
  Recovery recovery = Recovery::one_shot;
  int loops = 1;                       // (r_{t/L} ∘ f_{t/L})^L
};

struct BoundReport {
  int t = 0;
  int loops = 1;
  std::size_t trials = 0;
  double mmse = 0;             // analytic, at step t / loops
  double eps_norm = 0;         // ||eps_a|| / sqrt(d)
  double e_tucker = 0;         // mean ||x - TF(x)|| / sqrt(d)
  double tf_eps = 0;           // ||TF(eps_a)|| / sqrt(d)
  double clean_empirical = 0;  // recovery error of a clean input, one loop
  double delta_ddpm_est = 0;   // max(0, clean_empirical - mmse)
  double empirical = 0;        // measured error against x_clean
  double empirical_norm = 0;   // E||x_hat - x_clean|| / sqrt(d)
  double lower = 0;
  double upper = 0;
  double tolerance = 0;        // 3 Monte Carlo standard errors of `empirical`
  bool lower_ok = false;
  bool upper_ok = false;

  bool holds() const { return lower_ok && upper_ok; }
};

/// Lower bound: mmse - ||eps_a|| (single loop without TF; 0 otherwise).
/// Upper bound: mmse + delta + ||eps_a||, with E_Tucker + ||TF(eps_a)|| in
/// place of ||eps_a|| when a basis is set, and L * (mmse + delta) for loops.
BoundReport verify_bounds(const BoundSetup& setup, int t, std::size_t trials, Rng& rng);

}  // namespace lorid
