#pragma once

#include "lorid/denoiser.hpp"
#include "lorid/rng.hpp"
#include "lorid/schedule.hpp"
#include "lorid/tensor.hpp"
#include "lorid/tucker.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace lorid {

enum class Sampler { ancestral, skip };

/// Order of the two halves of each loop. diffuse_then_denoise is
/// (r_t' ∘ f_t')^L; denoise_then_diffuse runs x <- f_t'(r_t'(x)).
enum class LoopOrder { diffuse_then_denoise, denoise_then_diffuse };

struct LoridConfig {
  int t = 100;   // total purified time-step
  int loops = 1;  // L; each loop runs to t' = floor(t / L)
  bool use_tucker = false;
  std::optional<TuckerBasis> basis;
  Sampler sampler = Sampler::ancestral;
  int skip_k = 1;
  LoopOrder order = LoopOrder::diffuse_then_denoise;
  /// Applied once to the final output, never between loops.
  std::optional<std::pair<double, double>> clamp;
  std::uint64_t seed = 0;

  int step_per_loop() const { return loops > 0 ? t / loops : 0; }
  /// Throws std::invalid_argument on any violated invariant.
  void validate(const Schedule& schedule) const;
};

struct PurifyTrace {
  std::vector<Tensord> loop_outputs;
  std::vector<double> loop_distances;  // to the reference, when given
  double wall_seconds = 0;
};

struct PurifyResult {
  Tensord output;
  PurifyTrace trace;
};

/// r_t from x_t down to 0 with the configured sampler.
Tensord reverse(const Tensord& x_t, int t, Sampler sampler, int skip_k,
                const Denoiser& denoiser, const Schedule& schedule, Rng& rng);

/// Optional TF projection, then L loops of diffuse-to-t' and reverse-from-t'.
PurifyResult lorid_purify(const Tensord& x, const LoridConfig& cfg,
                          const Denoiser& denoiser, const Schedule& schedule, Rng& rng,
                          const Tensord* reference = nullptr);

/// r_t ∘ f_t with ancestral sampling.
Tensord purify_single(const Tensord& x, int t, const Denoiser& denoiser,
                      const Schedule& schedule, Rng& rng);

/// Purifies each sample of an (N, ...) batch with its own stream derived from
/// cfg.seed and the sample index, so results do not depend on batch order.
Tensord lorid_purify_batch(const Tensord& batch, const LoridConfig& cfg,
                           const Denoiser& denoiser, const Schedule& schedule);

Tensord add_adversarial(const Tensord& x_clean, const Tensord& eps_a);

struct Perturbation {
  Tensord delta;
  double l2 = 0;
  double linf = 0;
};

Perturbation record_perturbation(Tensord delta);

/// Entries are +budget or -budget with equal probability.
Perturbation uniform_sign_noise(const Shape& shape, double budget, Rng& rng);
/// Uniform direction on the l2 sphere of radius `radius`.
Perturbation l2_sphere_noise(const Shape& shape, double radius, Rng& rng);
/// Gaussian noise projected onto the directions TF discards, scaled to l2
/// norm `radius`. TF maps it to (numerically) zero.
Perturbation discarded_subspace_noise(const TuckerBasis& basis, double radius, Rng& rng);

}  // namespace lorid
