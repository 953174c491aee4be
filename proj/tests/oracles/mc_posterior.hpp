#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

struct MixtureComponent {
  double weight, mean, stddev;
};

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  double effective_samples = 0.0;
};

/// E[x0 | x_t] for x_t = sqrt(ab) x0 + sqrt(1 - ab) eps by self-normalized
/// importance sampling with the prior as proposal. Weights are the Gaussian
/// likelihood without its normalizer, so they never exceed 1.
inline McEstimate mc_posterior_mean(const std::vector<MixtureComponent>& prior, double x_t, double alpha_bar,
                                    std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> weights;
  for (const auto& c : prior) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double a = std::sqrt(alpha_bar);
  const double inv_two_var = 0.5 / (1.0 - alpha_bar);
  double sw = 0, swx = 0, sww = 0, swwx = 0, swwxx = 0;
  for (std::size_t n = 0; n < samples; ++n) {
    const auto& c = prior[pick(gen)];
    const double x0 = c.mean + c.stddev * gauss(gen);
    const double r = x_t - a * x0;
    const double w = std::exp(-r * r * inv_two_var);
    sw += w;
    swx += w * x0;
    sww += w * w;
    swwx += w * w * x0;
    swwxx += w * w * x0 * x0;
  }
  McEstimate out;
  out.mean = swx / sw;
  const double s2 = swwxx - 2.0 * out.mean * swwx + out.mean * out.mean * sww;
  out.standard_error = std::sqrt(std::fmax(s2, 0.0)) / sw;
  out.effective_samples = sw * sw / sww;
  return out;
}

}  // namespace oracle
