#include "lorid/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace lorid {

Tensord diffuse_with(const Tensord& x0, const Tensord& eps, int t,
                     const Schedule& schedule) {
  schedule.check_step(t, 0);
  x0.require_same_shape(eps);
  const double ab = schedule.alpha_bar(t);
  return Tensord(x0.shape(), std::sqrt(ab) * x0.values() + std::sqrt(1.0 - ab) * eps.values());
}

Diffused diffuse(const Tensord& x0, int t, const Schedule& schedule, Rng& rng) {
  schedule.check_step(t, 0);
  Tensord eps = standard_normal(x0.shape(), rng);
  Tensord x_t = diffuse_with(x0, eps, t, schedule);
  return {std::move(x_t), std::move(eps)};
}

Tensord recover_with(const Tensord& x_t, const Tensord& eps_hat, int t,
                     const Schedule& schedule) {
  schedule.check_step(t);
  x_t.require_same_shape(eps_hat);
  const double ab = schedule.alpha_bar(t);
  const double root = std::sqrt(ab);
  return Tensord(x_t.shape(),
                 x_t.values() / root - (std::sqrt(1.0 - ab) / root) * eps_hat.values());
}

Tensord one_shot_recover(const Tensord& x_t, int t, const Denoiser& denoiser,
                         const Schedule& schedule) {
  schedule.check_step(t);
  return recover_with(x_t, denoiser.predict_eps(x_t, t), t, schedule);
}

double posterior_sigma(int s, const Schedule& schedule) {
  schedule.check_step(s);
  return std::sqrt(schedule.beta(s) * (1.0 - schedule.alpha_bar(s - 1)) /
                   (1.0 - schedule.alpha_bar(s)));
}

Tensord reverse_ancestral(const Tensord& x_t, int t, const Denoiser& denoiser,
                          const Schedule& schedule, Rng& rng) {
  schedule.check_step(t);
  Tensord x = x_t;
  for (int s = t; s >= 1; --s) {
    const Tensord eps_hat = denoiser.predict_eps(x, s);
    const double coef = schedule.beta(s) / std::sqrt(1.0 - schedule.alpha_bar(s));
    Vectord next = (x.values() - coef * eps_hat.values()) / std::sqrt(schedule.alpha(s));
    if (s > 1)
      next += posterior_sigma(s, schedule) *
              standard_normal(static_cast<Eigen::Index>(x.size()), rng);
    x.values() = std::move(next);
  }
  return x;
}

Tensord reverse_skip(const Tensord& x_t, int t, int k, const Denoiser& denoiser,
                     const Schedule& schedule) {
  schedule.check_step(t);
  if (k < 1) throw std::invalid_argument("skip k must be >= 1");
  Tensord x = x_t;
  for (int s = t; s > 0;) {
    const int next = std::max(s - k, 0);
    const double ab = schedule.alpha_bar(s);
    const double ab_next = schedule.alpha_bar(next);
    const Tensord eps_hat = denoiser.predict_eps(x, s);
    const double eps_coef = std::sqrt(ab_next) * (std::sqrt((1.0 - ab_next) / ab_next) -
                                                  std::sqrt((1.0 - ab) / ab));
    x.values() = std::sqrt(ab_next / ab) * x.values() + eps_coef * eps_hat.values();
    s = next;
  }
  return x;
}

}  // namespace lorid
