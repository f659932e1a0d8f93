#pragma once

#include <string>
#include <vector>

namespace lorid {

/// DDPM variance schedule for steps t = 1..T, with the convention
/// alpha_bar(0) = 1.
class Schedule {
 public:
  explicit Schedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;
  /// Effective signal-to-noise ratio alpha_bar / (1 - alpha_bar).
  double snr(int t) const;

  /// Throws std::out_of_range unless lo <= t <= T.
  void check_step(int t, int lo = 1) const;

  const std::vector<double>& betas() const { return betas_; }

 private:
  std::size_t index(int t) const;

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // alpha_bars_[t], t = 0..T
};

/// Linearly spaced betas from beta_start (t = 1) to beta_end (t = T).
Schedule make_linear_schedule(int steps = 1000, double beta_start = 1e-4,
                              double beta_end = 0.02);

}  // namespace lorid
