#include "lorid/purify.hpp"

#include "lorid/diffusion.hpp"

#include <chrono>
#include <stdexcept>

namespace lorid {

void LoridConfig::validate(const Schedule& schedule) const {
  if (t < 1 || t > schedule.steps())
    throw std::invalid_argument("purification t must lie in [1, T]");
  if (loops < 1 || loops > t)
    throw std::invalid_argument("loop count L must lie in [1, t] (t' = floor(t/L) >= 1)");
  if (use_tucker && !basis) throw std::invalid_argument("use_tucker requires a basis");
  if (sampler == Sampler::skip && skip_k < 1)
    throw std::invalid_argument("skip sampler needs k >= 1");
  if (clamp && !(clamp->first < clamp->second))
    throw std::invalid_argument("clamp range must be increasing");
}

Tensord reverse(const Tensord& x_t, int t, Sampler sampler, int skip_k,
                const Denoiser& denoiser, const Schedule& schedule, Rng& rng) {
  if (sampler == Sampler::skip) return reverse_skip(x_t, t, skip_k, denoiser, schedule);
  return reverse_ancestral(x_t, t, denoiser, schedule, rng);
}

PurifyResult lorid_purify(const Tensord& x, const LoridConfig& cfg,
                          const Denoiser& denoiser, const Schedule& schedule, Rng& rng,
                          const Tensord* reference) {
  cfg.validate(schedule);
  const auto start = std::chrono::steady_clock::now();
  PurifyResult res;
  Tensord cur = cfg.use_tucker ? tf_apply(x, *cfg.basis) : x;
  const int step = cfg.step_per_loop();
  for (int l = 0; l < cfg.loops; ++l) {
    if (cfg.order == LoopOrder::diffuse_then_denoise) {
      const Tensord x_t = diffuse(cur, step, schedule, rng).x_t;
      cur = reverse(x_t, step, cfg.sampler, cfg.skip_k, denoiser, schedule, rng);
    } else {
      const Tensord x0 = reverse(cur, step, cfg.sampler, cfg.skip_k, denoiser, schedule, rng);
      cur = diffuse(x0, step, schedule, rng).x_t;
    }
    res.trace.loop_outputs.push_back(cur);
    if (reference) res.trace.loop_distances.push_back(distance(cur, *reference));
  }
  if (cfg.clamp)
    cur.values() = cur.values().cwiseMax(cfg.clamp->first).cwiseMin(cfg.clamp->second);
  res.output = std::move(cur);
  res.trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

Tensord purify_single(const Tensord& x, int t, const Denoiser& denoiser,
                      const Schedule& schedule, Rng& rng) {
  schedule.check_step(t);
  const Tensord x_t = diffuse(x, t, schedule, rng).x_t;
  return reverse_ancestral(x_t, t, denoiser, schedule, rng);
}

Tensord lorid_purify_batch(const Tensord& batch, const LoridConfig& cfg,
                           const Denoiser& denoiser, const Schedule& schedule) {
  cfg.validate(schedule);
  const std::size_t n = batch.dim(0);
  const std::size_t per = batch.size() / n;
  Shape sample_shape(batch.shape().begin() + 1, batch.shape().end());
  if (sample_shape.empty()) sample_shape = {1};
  Tensord out(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Tensord x(sample_shape,
              batch.values().segment(static_cast<Eigen::Index>(i * per),
                                     static_cast<Eigen::Index>(per)));
    Rng rng = make_rng(cfg.seed, i);
    const Tensord y = lorid_purify(x, cfg, denoiser, schedule, rng).output;
    out.values().segment(static_cast<Eigen::Index>(i * per), static_cast<Eigen::Index>(per)) =
        y.values();
  }
  return out;
}

Tensord add_adversarial(const Tensord& x_clean, const Tensord& eps_a) {
  return x_clean + eps_a;
}

Perturbation record_perturbation(Tensord delta) {
  Perturbation p;
  p.l2 = l2_norm(delta);
  p.linf = linf_norm(delta);
  p.delta = std::move(delta);
  return p;
}

Perturbation uniform_sign_noise(const Shape& shape, double budget, Rng& rng) {
  if (budget < 0) throw std::invalid_argument("budget must be >= 0");
  std::bernoulli_distribution coin(0.5);
  Tensord d(shape);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = coin(rng) ? budget : -budget;
  return record_perturbation(std::move(d));
}

Perturbation l2_sphere_noise(const Shape& shape, double radius, Rng& rng) {
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  Tensord d = standard_normal(shape, rng);
  d *= radius / frobenius_norm(d);
  return record_perturbation(std::move(d));
}

Perturbation discarded_subspace_noise(const TuckerBasis& basis, double radius, Rng& rng) {
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  Tensord g = standard_normal(basis.layout.image_shape(), rng);
  Tensord d = tf_residual(g, basis);
  const double norm = frobenius_norm(d);
  if (norm <= 1e-10 * frobenius_norm(g)) throw std::invalid_argument("basis discards no directions");
  d *= radius / norm;
  return record_perturbation(std::move(d));
}

}  // namespace lorid
