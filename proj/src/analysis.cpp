#include "lorid/analysis.hpp"

#include "lorid/diffusion.hpp"
#include "lorid/purify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lorid {

double mmse_gaussian(double snr) {
  if (!(snr >= 0)) throw std::invalid_argument("snr must be >= 0");
  return 1.0 / (1.0 + snr);
}

double mmse_gaussian_spectrum(double snr, const Vectord& eigenvalues) {
  if (!(snr >= 0)) throw std::invalid_argument("snr must be >= 0");
  if (eigenvalues.size() == 0) throw std::invalid_argument("empty spectrum");
  return (eigenvalues.array() / (1.0 + snr * eigenvalues.array())).mean();
}

namespace {

double binary_integral(double snr, std::size_t nodes) {
  constexpr double lo = -12.0, hi = 12.0;
  const double h = (hi - lo) / static_cast<double>(nodes - 1);
  const double root = std::sqrt(snr);
  double sum = 0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double y = lo + h * static_cast<double>(i);
    const double w = (i == 0 || i + 1 == nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * std::exp(-0.5 * y * y) * std::tanh(snr - root * y);
  }
  return sum * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

double mmse_binary(double snr) {
  if (!(snr >= 0)) throw std::invalid_argument("snr must be >= 0");
  if (snr == 0) return 1.0;
  const double fine = binary_integral(snr, 4801);
  const double coarse = binary_integral(snr, 2401);
  if (!std::isfinite(fine) || std::abs(fine - coarse) > 1e-9)
    throw std::runtime_error("binary MMSE quadrature did not converge at snr " +
                             std::to_string(snr));
  return std::clamp(1.0 - fine, 0.0, 1.0);
}

double effective_snr(const Schedule& schedule, int t) { return schedule.snr(t); }

bool non_increasing(const std::vector<double>& seq, double tol) {
  for (std::size_t i = 1; i < seq.size(); ++i)
    if (seq[i] > seq[i - 1] + tol) return false;
  return true;
}

double max_increase(const std::vector<double>& seq) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < seq.size(); ++i) worst = std::max(worst, seq[i] - seq[i - 1]);
  return worst;
}

std::vector<CurvePoint> loop_bound_curve(const Schedule& schedule, int effective_t,
                                         const std::vector<int>& loop_values) {
  std::vector<CurvePoint> out;
  for (int loops : loop_values) {
    if (loops < 1) throw std::invalid_argument("loop count must be >= 1");
    const int step = effective_t / loops;
    if (step < 1)
      throw std::invalid_argument("effective t " + std::to_string(effective_t) +
                                  " / L " + std::to_string(loops) + " is below one step");
    out.push_back({loops, step, loops * step,
                   loops * mmse_gaussian(effective_snr(schedule, step))});
  }
  return out;
}

double kl_gaussian(const GaussianDist& p, const GaussianDist& q) {
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d || p.cov.rows() != d || q.cov.rows() != d)
    throw std::invalid_argument("kl_gaussian dimension mismatch");
  Eigen::LLT<Matrixd> lp(p.cov), lq(q.cov);
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success)
    throw std::invalid_argument("kl_gaussian needs positive definite covariances");
  const Matrixd lp_m = lp.matrixL();
  const Matrixd lq_m = lq.matrixL();
  const double logdet_p = 2.0 * lp_m.diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq_m.diagonal().array().log().sum();
  // tr(Q^-1 P) = ||Lq^-1 Lp||_F^2
  const Matrixd m = lq.matrixL().solve(lp_m);
  const Vectord diff = lq.matrixL().solve(q.mean - p.mean);
  return 0.5 * (m.squaredNorm() + diff.squaredNorm() - static_cast<double>(d) +
                logdet_q - logdet_p);
}

GaussianDist forward_gaussian(const GaussianDist& p, const Schedule& schedule, int t) {
  schedule.check_step(t, 0);
  const double ab = schedule.alpha_bar(t);
  const Eigen::Index d = p.mean.size();
  return {std::sqrt(ab) * p.mean,
          ab * p.cov + (1.0 - ab) * Matrixd::Identity(d, d)};
}

double kl_gaussian_forward(const GaussianDist& p1, const GaussianDist& p2,
                           const Schedule& schedule, int t) {
  return kl_gaussian(forward_gaussian(p1, schedule, t), forward_gaussian(p2, schedule, t));
}

GaussianDist random_gaussian(Eigen::Index dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  const Matrixd a = standard_normal(dim * dim, rng).reshaped(dim, dim);
  Matrixd cov = a * a.transpose() / static_cast<double>(dim);
  cov.diagonal().array() += 0.1;
  return {standard_normal(dim, rng), cov};
}

std::vector<double> kl_forward_sequence(const GaussianDist& p1, const GaussianDist& p2,
                                        const Schedule& schedule, const std::vector<int>& steps) {
  std::vector<double> out;
  out.reserve(steps.size());
  for (int t : steps) out.push_back(kl_gaussian_forward(p1, p2, schedule, t));
  return out;
}

Vectord Grid1D::points() const {
  Vectord x(static_cast<Eigen::Index>(nodes));
  for (std::size_t i = 0; i < nodes; ++i) x[static_cast<Eigen::Index>(i)] = at(i);
  return x;
}

Vectord Grid1D::weights() const {
  Vectord w = Vectord::Constant(static_cast<Eigen::Index>(nodes), step());
  w[0] *= 0.5;
  w[w.size() - 1] *= 0.5;
  return w;
}

Vectord tabulate_density(const Grid1D& grid, const std::function<double(double)>& pdf) {
  Vectord p(static_cast<Eigen::Index>(grid.nodes));
  for (std::size_t i = 0; i < grid.nodes; ++i) p[static_cast<Eigen::Index>(i)] = pdf(grid.at(i));
  return p;
}

namespace {

constexpr double kNormalizationTolerance = 1e-6;

void check_density(const Grid1D& grid, const Vectord& p, const char* what) {
  if (grid.nodes < 3 || !(grid.hi > grid.lo)) throw std::invalid_argument("degenerate grid");
  if (p.size() != static_cast<Eigen::Index>(grid.nodes))
    throw std::invalid_argument(std::string(what) + " does not match the grid");
  if (!p.allFinite() || p.minCoeff() < 0)
    throw std::invalid_argument(std::string(what) + " must be finite and nonnegative");
  const double mass = grid.weights().dot(p);
  if (std::abs(mass - 1.0) > kNormalizationTolerance)
    throw std::runtime_error(std::string(what) + " integrates to " + std::to_string(mass) +
                             "; grid too coarse or too narrow");
}

}  // namespace

Vectord forward_density(const Grid1D& grid, const Vectord& density,
                        const Schedule& schedule, int t) {
  check_density(grid, density, "density");
  schedule.check_step(t, 0);
  if (t == 0) return density;
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double s = std::sqrt(1.0 - schedule.alpha_bar(t));
  const Vectord x = grid.points();
  const Vectord mass = grid.weights().cwiseProduct(density);
  const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
  Vectord out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const auto z = (x[j] - a * x.array()) / s;
    out[j] = norm * (mass.array() * (-0.5 * z.square()).exp()).sum();
  }
  check_density(grid, out, "forward density");
  return out;
}

double grid_kl(const Grid1D& grid, const Vectord& p, const Vectord& q) {
  const Vectord w = grid.weights();
  double kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) return std::numeric_limits<double>::infinity();
    kl += w[i] * p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double kl_quadrature_forward(const Grid1D& grid, const Vectord& density1,
                             const Vectord& density2, const Schedule& schedule, int t) {
  return grid_kl(grid, forward_density(grid, density1, schedule, t),
                 forward_density(grid, density2, schedule, t));
}

TuckerBasis random_tucker_basis(const TensorizationLayout& layout,
                                const std::vector<std::size_t>& ranks, Rng& rng) {
  layout.validate();
  const Shape dims = layout.tensor_shape();
  if (ranks.size() != dims.size())
    throw std::invalid_argument("need one rank per tensorized mode");
  TuckerBasis basis;
  basis.layout = layout;
  for (std::size_t n = 0; n < dims.size(); ++n) {
    if (ranks[n] < 1 || ranks[n] > dims[n]) throw std::invalid_argument("rank out of range");
    const auto rows = static_cast<Eigen::Index>(dims[n]);
    Matrixd g(rows, static_cast<Eigen::Index>(ranks[n]));
    g = standard_normal(g.size(), rng).reshaped(g.rows(), g.cols());
    Eigen::HouseholderQR<Matrixd> qr(g);
    basis.factors.push_back(qr.householderQ() * Matrixd::Identity(rows, g.cols()));
    basis.ranks.push_back(ranks[n]);
    basis.discarded_energy.push_back(0.0);
  }
  basis.validate();
  return basis;
}

GaussianPrior tucker_gaussian_prior(const TuckerBasis& basis, double signal, double noise) {
  if (signal < 0 || noise < 0) throw std::invalid_argument("scales must be >= 0");
  const Shape shape = basis.layout.image_shape();
  const auto d = static_cast<Eigen::Index>(shape_size(shape));
  Matrixd proj(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Tensord e(shape);
    e[static_cast<std::size_t>(j)] = 1.0;
    proj.col(j) = tf_apply(e, basis).values();
  }
  Matrixd cov = signal * signal * proj + noise * noise * Matrixd::Identity(d, d);
  cov = 0.5 * (cov + cov.transpose());
  return GaussianPrior(Vectord::Zero(d), cov);
}

std::vector<double> kl_quadrature_sequence(const Grid1D& grid, const Vectord& density1,
                                           const Vectord& density2, const Schedule& schedule,
                                           const std::vector<int>& steps) {
  std::vector<double> out;
  out.reserve(steps.size());
  for (int t : steps) out.push_back(kl_quadrature_forward(grid, density1, density2, schedule, t));
  return out;
}

Vectord normalize_density(const Grid1D& grid, Vectord density) {
  const double mass = grid.weights().dot(density);
  if (!(mass > 0)) throw std::invalid_argument("density has no mass on the grid");
  return density / mass;
}

namespace {

double normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double laplace_pdf(double x, double mu, double b) { return std::exp(-std::abs(x - mu) / b) / (2 * b); }

}  // namespace

std::vector<std::pair<Vectord, Vectord>> reference_density_pairs(const Grid1D& grid) {
  using F = std::function<double(double)>;
  const std::vector<std::pair<F, F>> pdfs = {
      {[](double x) { return 0.5 * normal_pdf(x, -2, 0.5) + 0.5 * normal_pdf(x, 2, 0.5); },
       [](double x) { return normal_pdf(x, 0, 1); }},
      {[](double x) { return laplace_pdf(x, 0, 1); },
       [](double x) { return normal_pdf(x, 0, 1); }},
      {[](double x) {
         const double e = std::exp(-std::abs(x));
         return e / ((1 + e) * (1 + e));
       },
       [](double x) { return normal_pdf(x, 0.5, 1.5); }},
      {[](double x) { return 0.8 * normal_pdf(x, 0, 1) + 0.2 * normal_pdf(x, 3, 0.3); },
       [](double x) { return laplace_pdf(x, 1, 0.7); }},
      {[](double x) {
         return std::abs(x) < 2 ? 0.25 * (1 + std::cos(std::numbers::pi * x / 2)) : 0.0;
       },
       [](double x) { return normal_pdf(x, 0, 2); }},
  };
  std::vector<std::pair<Vectord, Vectord>> out;
  for (const auto& [p, q] : pdfs)
    out.emplace_back(normalize_density(grid, tabulate_density(grid, p)),
                     normalize_density(grid, tabulate_density(grid, q)));
  return out;
}

namespace {

Tensord recover_once(const Tensord& x, int step, Recovery recovery,
                     const Denoiser& denoiser, const Schedule& schedule, Rng& rng) {
  const Tensord x_t = diffuse(x, step, schedule, rng).x_t;
  if (recovery == Recovery::one_shot) return one_shot_recover(x_t, step, denoiser, schedule);
  return reverse_ancestral(x_t, step, denoiser, schedule, rng);
}

}  // namespace

BoundReport verify_bounds(const BoundSetup& setup, int t, std::size_t trials, Rng& rng) {
  if (!setup.prior || !setup.denoiser || !setup.schedule)
    throw std::invalid_argument("bound setup needs prior, denoiser and schedule");
  if (trials < 1) throw std::invalid_argument("need at least one trial");
  if (setup.loops < 1) throw std::invalid_argument("loops must be >= 1");
  const Schedule& schedule = *setup.schedule;
  schedule.check_step(t);
  const int step = t / setup.loops;
  if (step < 1) throw std::invalid_argument("t / loops is below one step");

  const Eigen::Index d = setup.prior->dim();
  const double root_d = std::sqrt(static_cast<double>(d));
  const Shape shape = setup.basis ? setup.basis->layout.image_shape()
                                  : Shape{static_cast<std::size_t>(d)};
  if (static_cast<Eigen::Index>(shape_size(shape)) != d)
    throw std::invalid_argument("basis layout does not match the prior dimension");
  const Tensord eps_a(shape, setup.eps_a.size() ? setup.eps_a : Vectord::Zero(d));

  BoundReport rep;
  rep.t = t;
  rep.loops = setup.loops;
  rep.trials = trials;
  rep.mmse = mmse_gaussian_spectrum(effective_snr(schedule, step),
                                    setup.prior->eigenvalues());
  rep.eps_norm = l2_norm(eps_a) / root_d;
  if (setup.basis) rep.tf_eps = l2_norm(tf_apply(eps_a, *setup.basis)) / root_d;

  double sum = 0, sum_sq = 0, sum_norm = 0, sum_clean = 0, sum_tucker = 0;
  for (std::size_t k = 0; k < trials; ++k) {
    const std::uint64_t seed = rng();
    Rng sample_rng = make_rng(seed, 0);
    const Tensord x_clean(shape, setup.prior->sample(sample_rng));

    // Common random numbers: both paths start from the same noise stream.
    Rng clean_rng = make_rng(seed, 1);
    const Tensord clean_hat =
        recover_once(x_clean, step, setup.recovery, *setup.denoiser, schedule, clean_rng);
    sum_clean += mse(clean_hat, x_clean);

    Tensord x = add_adversarial(x_clean, eps_a);
    if (setup.basis) {
      x = tf_apply(x, *setup.basis);
      sum_tucker += l2_norm(tf_residual(x_clean, *setup.basis)) / root_d;
    }
    Rng adv_rng = make_rng(seed, 1);
    for (int l = 0; l < setup.loops; ++l)
      x = recover_once(x, step, setup.recovery, *setup.denoiser, schedule, adv_rng);
    const double err = mse(x, x_clean);
    sum += err;
    sum_sq += err * err;
    sum_norm += distance(x, x_clean) / root_d;
  }
  const auto n = static_cast<double>(trials);
  rep.empirical = sum / n;
  rep.empirical_norm = sum_norm / n;
  rep.clean_empirical = sum_clean / n;
  rep.e_tucker = sum_tucker / n;
  const double var = std::max(0.0, sum_sq / n - rep.empirical * rep.empirical);
  rep.tolerance = 3.0 * std::sqrt(var / n);
  rep.delta_ddpm_est = std::max(0.0, rep.clean_empirical - rep.mmse);

  const double noise_term = setup.basis ? rep.e_tucker + rep.tf_eps : rep.eps_norm;
  rep.lower = setup.loops == 1 && !setup.basis ? rep.mmse - rep.eps_norm : 0.0;
  rep.upper = setup.loops * (rep.mmse + rep.delta_ddpm_est) + noise_term;
  rep.lower_ok = rep.empirical >= rep.lower - rep.tolerance;
  rep.upper_ok = rep.empirical <= rep.upper + rep.tolerance;
  return rep;
}

}  // namespace lorid
