#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/volume.hpp"

namespace nerd {

// ---------------------------------------------------------------------------
// Tweedie's formula and its inverse.

inline double tweedie_denoise(double x_t, double alpha_bar, double eps) {
  return (x_t - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
}

inline double eps_from_denoiser(double x_t, double alpha_bar, double x0) {
  return (x_t - std::sqrt(alpha_bar) * x0) / std::sqrt(1.0 - alpha_bar);
}

/// x0 = (x_t - sqrt(1 - abar) eps) / sqrt(abar)
template <DenseField F>
F tweedie_denoise(const F& x_t, double alpha_bar, const F& eps) {
  require(alpha_bar > 0.0 && alpha_bar <= 1.0, "tweedie_denoise: alpha_bar must lie in (0, 1]");
  require_same_shape(x_t, eps, "tweedie_denoise");
  F out = x_t;
  auto o = out.values();
  auto e = eps.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = tweedie_denoise(o[n], alpha_bar, e[n]);
  return out;
}

/// eps = (x_t - sqrt(abar) x0) / sqrt(1 - abar)
template <DenseField F>
F eps_from_denoiser(const F& x_t, double alpha_bar, const F& x0) {
  require(alpha_bar >= 0.0 && alpha_bar < 1.0, "eps_from_denoiser: alpha_bar must lie in [0, 1)");
  require_same_shape(x_t, x0, "eps_from_denoiser");
  F out = x_t;
  auto o = out.values();
  auto d = x0.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = eps_from_denoiser(o[n], alpha_bar, d[n]);
  return out;
}

// ---------------------------------------------------------------------------

/// The denoiser f(x_t) = E[x_0 | x_t] used inside every sampler, together
/// with its vector-Jacobian product. Implementations act per axial slice.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Volume3D denoise(const Volume3D& x_t, double alpha_bar) const = 0;

  /// Gradient of <cotangent, denoise(x_t)> with respect to x_t.
  virtual Volume3D input_vjp(const Volume3D& x_t, double alpha_bar, const Volume3D& cotangent) const = 0;

  /// True only for the identity map; enables closed-form inner solves.
  virtual bool is_identity() const { return false; }
};

/// f(x) = x. Turns the samplers into plain linear-inverse-problem solvers.
class IdentityDenoiser final : public Denoiser {
 public:
  Volume3D denoise(const Volume3D& x_t, double) const override { return x_t; }
  Volume3D input_vjp(const Volume3D&, double, const Volume3D& cotangent) const override { return cotangent; }
  bool is_identity() const override { return true; }
};

// ---------------------------------------------------------------------------
// Scalar Gaussian-mixture prior with a closed-form posterior mean.

struct GmmComponent {
  double weight;
  double mean;
  double stddev;
};

/// x_0 ~ sum_k pi_k N(mu_k, s_k^2), applied independently per voxel.
/// Under x_t = sqrt(abar) x_0 + sqrt(1 - abar) eps each component stays
/// Gaussian, so E[x_0 | x_t] and its derivative are available exactly.
class GmmScalarPrior {
 public:
  GmmScalarPrior() = default;

  explicit GmmScalarPrior(std::vector<GmmComponent> components) : components_(std::move(components)) {
    require(!components_.empty(), "GmmScalarPrior: at least one component required");
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.weight > 0.0 && std::isfinite(c.weight), "GmmScalarPrior: weights must be positive");
      require(c.stddev > 0.0 && std::isfinite(c.stddev), "GmmScalarPrior: std must be positive");
      require(std::isfinite(c.mean), "GmmScalarPrior: mean must be finite");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-9, "GmmScalarPrior: weights must sum to 1");
  }

  const std::vector<GmmComponent>& components() const { return components_; }

  double prior_mean() const {
    double m = 0.0;
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
  }

  double posterior_mean(double x_t, double alpha_bar) const { return evaluate(x_t, alpha_bar).mean; }

  double posterior_mean_derivative(double x_t, double alpha_bar) const {
    return evaluate(x_t, alpha_bar).derivative;
  }

  struct Moments {
    double mean;
    double derivative;
  };

  /// Posterior mean and d(mean)/d(x_t) in one pass.
  ///
  /// Component k has marginal variance c_k = abar s_k^2 + (1 - abar), local
  /// mean m_k = (sqrt(abar) s_k^2 x + (1 - abar) mu_k) / c_k and
  /// responsibility w_k ~ pi_k N(x; sqrt(abar) mu_k, c_k). With
  /// g_k = -(x - sqrt(abar) mu_k) / c_k the derivative is
  /// sum_k w_k [sqrt(abar) s_k^2 / c_k + m_k (g_k - sum_j w_j g_j)].
  Moments evaluate(double x, double alpha_bar) const {
    require(alpha_bar > 0.0 && alpha_bar <= 1.0, "GmmScalarPrior: alpha_bar must lie in (0, 1]");
    const double a = std::sqrt(alpha_bar);
    const double noise = 1.0 - alpha_bar;
    constexpr std::size_t kInline = 8;
    double logw_buf[kInline], m_buf[kInline], g_buf[kInline], dm_buf[kInline];
    std::vector<double> heap;
    double* logw = logw_buf;
    double* m = m_buf;
    double* g = g_buf;
    double* dm = dm_buf;
    const std::size_t K = components_.size();
    if (K > kInline) {
      heap.resize(4 * K);
      logw = heap.data();
      m = logw + K;
      g = m + K;
      dm = g + K;
    }
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const auto& comp = components_[k];
      const double s2 = comp.stddev * comp.stddev;
      const double c = alpha_bar * s2 + noise;
      const double r = x - a * comp.mean;
      logw[k] = std::log(comp.weight) - 0.5 * std::log(c) - 0.5 * r * r / c;
      m[k] = (a * s2 * x + noise * comp.mean) / c;
      dm[k] = a * s2 / c;
      g[k] = -r / c;
      max_logw = std::max(max_logw, logw[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      logw[k] = std::exp(logw[k] - max_logw);
      z += logw[k];
    }
    double mean = 0.0, g_bar = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      logw[k] /= z;
      mean += logw[k] * m[k];
      g_bar += logw[k] * g[k];
    }
    double deriv = 0.0;
    for (std::size_t k = 0; k < K; ++k) deriv += logw[k] * (dm[k] + (m[k] - mean) * (g[k] - g_bar));
    return {mean, deriv};
  }

 private:
  std::vector<GmmComponent> components_;
};

/// Applies a GmmScalarPrior voxelwise as a Tweedie denoiser.
class GmmDenoiser final : public Denoiser {
 public:
  explicit GmmDenoiser(GmmScalarPrior prior) : prior_(std::move(prior)) {}

  const GmmScalarPrior& prior() const { return prior_; }

  Volume3D denoise(const Volume3D& x_t, double alpha_bar) const override {
    Volume3D out = x_t;
    for (double& v : out.values()) v = prior_.posterior_mean(v, alpha_bar);
    return out;
  }

  /// Elementwise multiply by the derivative field.
  Volume3D input_vjp(const Volume3D& x_t, double alpha_bar, const Volume3D& cotangent) const override {
    require_same_shape(x_t, cotangent, "GmmDenoiser::input_vjp");
    Volume3D out = cotangent;
    auto o = out.values();
    auto x = x_t.values();
    for (std::size_t n = 0; n < o.size(); ++n) o[n] *= prior_.posterior_mean_derivative(x[n], alpha_bar);
    return out;
  }

 private:
  GmmScalarPrior prior_;
};

}  // namespace nerd
