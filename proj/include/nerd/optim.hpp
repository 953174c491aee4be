#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/volume.hpp"

namespace nerd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for one flat parameter vector.
struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `x` in place.
inline void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad) {
  require(x.size() == state.m.size() && grad.size() == x.size(), "adam_step: shape mismatch");
  if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t n = 0; n < x.size(); ++n) {
    state.m[n] = c.beta1 * state.m[n] + (1.0 - c.beta1) * grad[n];
    state.v[n] = c.beta2 * state.v[n] + (1.0 - c.beta2) * grad[n] * grad[n];
    const double m_hat = state.m[n] / bc1;
    const double v_hat = state.v[n] / bc2;
    x[n] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

// ---------------------------------------------------------------------------
// Proximal maps.

inline double soft_threshold(double v, double kappa) {
  const double mag = std::abs(v) - kappa;
  if (mag <= 0.0) return 0.0;
  return v > 0.0 ? mag : -mag;
}

/// Elementwise sign(v) max(|v| - kappa, 0): the prox of kappa*||.||_1.
template <DenseField F>
F soft_threshold(const F& v, double kappa) {
  require(kappa >= 0.0, "soft_threshold: kappa must be >= 0");
  F out = v;
  for (double& x : out.values()) x = soft_threshold(x, kappa);
  return out;
}

/// Elementwise u / max(1, |u|), the Euclidean projection onto ||u||_inf <= 1.
template <DenseField F>
F project_linf_ball(const F& u) {
  F out = u;
  for (double& x : out.values()) x = x / std::max(1.0, std::abs(x));
  return out;
}

// ---------------------------------------------------------------------------
// Conjugate gradient for symmetric positive definite operators.

struct CgOptions {
  double tol = 1e-6;  // relative to ||b||
  std::size_t max_iter = 30;
};

template <DenseField F>
struct CgResult {
  F x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  std::vector<double> residual_history;  // ||r_k|| / ||b||, k = 0..iterations
};

/// Solves M x = b from the initial guess `x0`. Returns the iterate with the
/// smallest residual seen; `converged` is false if the tolerance was not met
/// within max_iter, and `breakdown` flags a search direction with
/// non-positive curvature.
template <DenseField F, class ApplyM>
CgResult<F> cg_solve(ApplyM&& apply_m, const F& b, F x0, const CgOptions& opt = {}) {
  require_same_shape(b, x0, "cg_solve");
  CgResult<F> res;
  const double b_norm = l2_norm(b);
  if (b_norm == 0.0) {
    res.x = scale(0.0, x0);
    res.converged = true;
    res.residual_history.push_back(0.0);
    return res;
  }
  F x = std::move(x0);
  F r = subtract(b, static_cast<F>(apply_m(x)));
  F p = r;
  double rr = l2_norm_sq(r);
  double best = std::sqrt(rr) / b_norm;
  F best_x = x;
  res.residual_history.push_back(best);
  while (res.iterations < opt.max_iter && std::sqrt(rr) / b_norm > opt.tol) {
    const F q = apply_m(p);
    const double curvature = dot(p, q);
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      res.breakdown = true;
      break;
    }
    const double alpha = rr / curvature;
    axpy_inplace(alpha, p, x);
    axpy_inplace(-alpha, q, r);
    const double rr_new = l2_norm_sq(r);
    ++res.iterations;
    const double rel = std::sqrt(rr_new) / b_norm;
    res.residual_history.push_back(rel);
    if (rel < best) {
      best = rel;
      best_x = x;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    auto pv = p.values();
    auto rv = r.values();
    for (std::size_t n = 0; n < pv.size(); ++n) pv[n] = rv[n] + beta * pv[n];
  }
  res.x = std::move(best_x);
  res.relative_residual = best;
  res.converged = best <= opt.tol;
  return res;
}

}  // namespace nerd
