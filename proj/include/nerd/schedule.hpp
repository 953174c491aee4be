#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nerd/error.hpp"

namespace nerd {

/// Cumulative signal retention alpha_bar[t] for t = 0..T, with alpha_bar[0] = 1.
class NoiseSchedule {
 public:
  /// DDPM linear beta schedule: beta_s evenly spaced on [beta_start, beta_end],
  /// alpha_bar_t = prod_{s<=t} (1 - beta_s).
  static NoiseSchedule linear(std::size_t T = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
    require(T >= 1, "NoiseSchedule: T must be >= 1");
    require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end, "NoiseSchedule: invalid beta range");
    NoiseSchedule s;
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.alpha_bar_.resize(T + 1);
    s.alpha_bar_[0] = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
      const double beta = beta_start + (beta_end - beta_start) * frac;
      s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - beta);
    }
    return s;
  }

  std::size_t T() const { return alpha_bar_.size() - 1; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  double alpha_bar(std::size_t t) const {
    require(t < alpha_bar_.size(), "NoiseSchedule: time index out of range");
    return alpha_bar_[t];
  }

  /// N uniformly spaced indices t_i = floor(i*T/N), i = 1..N, ascending.
  /// Sampling walks this list backwards; the step at t_i resamples to t_{i-1}
  /// with t_0 = 0.
  std::vector<std::size_t> sampling_steps(std::size_t N) const {
    require(N >= 1 && N <= T(), "NoiseSchedule: need 1 <= N <= T");
    std::vector<std::size_t> steps(N);
    for (std::size_t i = 1; i <= N; ++i) steps[i - 1] = i * T() / N;
    return steps;
  }

 private:
  std::vector<double> alpha_bar_;
  double beta_start_ = 0.0, beta_end_ = 0.0;
};

}  // namespace nerd
