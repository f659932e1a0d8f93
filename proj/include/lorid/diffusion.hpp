#pragma once

#include "lorid/denoiser.hpp"
#include "lorid/rng.hpp"
#include "lorid/schedule.hpp"
#include "lorid/tensor.hpp"

namespace lorid {

struct Diffused {
  Tensord x_t;
  Tensord eps;  // the standard Gaussian draw that produced x_t
};

/// Forward process f_t: x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
/// t = 0 is accepted and returns x0 (ab_0 = 1).
Diffused diffuse(const Tensord& x0, int t, const Schedule& schedule, Rng& rng);
Tensord diffuse_with(const Tensord& x0, const Tensord& eps, int t,
                     const Schedule& schedule);

/// x0_hat = x_t / sqrt(ab_t) - sqrt(1 - ab_t) / sqrt(ab_t) * eps_theta(x_t, t).
Tensord one_shot_recover(const Tensord& x_t, int t, const Denoiser& denoiser,
                         const Schedule& schedule);

/// Same formula with an explicit noise estimate.
Tensord recover_with(const Tensord& x_t, const Tensord& eps_hat, int t,
                     const Schedule& schedule);

/// Posterior standard deviation sqrt(beta_s (1 - ab_{s-1}) / (1 - ab_s)).
double posterior_sigma(int s, const Schedule& schedule);

/// Reverse process r_t: ancestral sampling from step t down to 0. No noise is
/// injected at the final step s = 1.
Tensord reverse_ancestral(const Tensord& x_t, int t, const Denoiser& denoiser,
                          const Schedule& schedule, Rng& rng);

/// Deterministic reverse process taking k steps at a time:
///   x_{s'} = sqrt(ab_s'/ab_s) x_s
///          + sqrt(ab_s') (sqrt((1-ab_s')/ab_s') - sqrt((1-ab_s)/ab_s)) eps_theta(x_s, s)
/// with s' = max(s - k, 0). With k >= t this is one_shot_recover.
Tensord reverse_skip(const Tensord& x_t, int t, int k, const Denoiser& denoiser,
                     const Schedule& schedule);

}  // namespace lorid
