#include "lorid/schedule.hpp"

#include <stdexcept>

namespace lorid {

Schedule::Schedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("schedule needs at least one step");
  alpha_bars_.reserve(betas_.size() + 1);
  alpha_bars_.push_back(1.0);
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0))
      throw std::invalid_argument("beta values must lie in (0, 1)");
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
  if (!(alpha_bars_.back() > 0.0))
    throw std::invalid_argument("alpha_bar underflows to zero at t = T");
}

std::size_t Schedule::index(int t) const {
  check_step(t);
  return static_cast<std::size_t>(t - 1);
}

void Schedule::check_step(int t, int lo) const {
  if (t < lo || t > steps())
    throw std::out_of_range("time step " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(steps()) + "]");
}

double Schedule::alpha_bar(int t) const {
  check_step(t, 0);
  return alpha_bars_[static_cast<std::size_t>(t)];
}

double Schedule::snr(int t) const {
  check_step(t);
  const double ab = alpha_bar(t);
  return ab / (1.0 - ab);
}

Schedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
  }
  return Schedule(std::move(betas));
}

}  // namespace lorid
