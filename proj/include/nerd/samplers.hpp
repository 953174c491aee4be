#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/forward_model.hpp"
#include "nerd/metrics.hpp"
#include "nerd/optim.hpp"
#include "nerd/priors.hpp"
#include "nerd/rng.hpp"
#include "nerd/schedule.hpp"
#include "nerd/volume.hpp"

namespace nerd {

enum class Method { sitcom, nerd_a, nerd_p, dds };

/// How the per-step primal subproblem is minimized. `exact` solves the
/// quadratic in closed form with CG and requires the identity denoiser.
enum class InnerSolver { adam, exact };

/// NERD-P update order. `primal_first` runs the box as written (primal
/// proximal step, extrapolation, then dual ascent and projection);
/// `dual_first` is the classical Chambolle-Pock order that ascends the dual
/// on the extrapolated point carried over from the previous iteration.
enum class PdhgOrder { primal_first, dual_first };

/// Inner Adam step size per sampling step: `constant` uses lr as is,
/// `noise` uses lr * sqrt(1 - abar_t).
enum class LrSchedule { constant, noise };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::sitcom: return "sitcom";
    case Method::nerd_a: return "nerd-a";
    case Method::nerd_p: return "nerd-p";
    case Method::dds: return "dds";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "sitcom") return Method::sitcom;
  if (s == "nerd-a") return Method::nerd_a;
  if (s == "nerd-p") return Method::nerd_p;
  if (s == "dds") return Method::dds;
  throw std::invalid_argument("unknown method '" + s + "' (expected sitcom, nerd-a, nerd-p or dds)");
}

struct SamplerConfig {
  Method method = Method::nerd_p;
  double lambda = 0.1;        // weight of ||v' - x_t||^2
  double lambda_z = 0.05;     // z-TV weight
  double rho = 1.0;           // ADMM penalty (NERD-A and the DDS baseline)
  double lambda_prime = 1.0;  // NERD-P coupling ||f(v') - w||^2
  double tau = 0.01;          // NERD-P primal step
  double sigma = 0.05;        // NERD-P dual step
  std::size_t steps = 30;         // N
  std::size_t adam_updates = 10;  // K
  AdamConfig adam{};              // adam.lr is the inner step size
  std::size_t dds_admm_iterations = 5;
  std::optional<double> dds_gamma;  // defaults to lambda_z
  double cg_tol = 1e-6;
  std::size_t cg_max_iter = 30;
  InnerSolver inner = InnerSolver::adam;
  PdhgOrder pdhg_order = PdhgOrder::primal_first;
  LrSchedule lr_schedule = LrSchedule::constant;
  std::uint64_t seed = 0;

  AdamConfig adam_at(double alpha_bar) const {
    AdamConfig a = adam;
    if (lr_schedule == LrSchedule::noise) a.lr *= std::sqrt(1.0 - alpha_bar);
    return a;
  }

  double gamma() const { return dds_gamma.value_or(lambda_z); }

  void validate() const {
    for (double w : {lambda, lambda_z, rho, lambda_prime, gamma()})
      require(w >= 0.0 && std::isfinite(w), "SamplerConfig: weights must be finite and >= 0");
    require(steps >= 1, "SamplerConfig: steps (N) must be >= 1");
    require(adam_updates >= 1, "SamplerConfig: adam_updates (K) must be >= 1");
    require(adam.lr >= 0.0 && std::isfinite(adam.lr), "SamplerConfig: lr must be >= 0");
    require(cg_tol > 0.0 && cg_max_iter >= 1, "SamplerConfig: invalid CG settings");
    if (method == Method::nerd_p)
      require(tau > 0.0 && sigma > 0.0 && std::isfinite(tau) && std::isfinite(sigma),
              "SamplerConfig: nerd-p requires tau, sigma > 0");
    if (method == Method::nerd_a && lambda_z > 0.0)
      require(rho > 0.0, "SamplerConfig: nerd-a with lambda_z > 0 requires rho > 0");
    if (method == Method::dds && dds_admm_iterations > 0 && gamma() > 0.0)
      require(rho > 0.0, "SamplerConfig: dds with gamma > 0 requires rho > 0");
  }
};

/// Per-step diagnostics. `psnr` is the axial slice-mean PSNR, NaN without a
/// ground truth.
struct TraceRecord {
  std::size_t step = 0;     // 1-based position in the run
  std::size_t t_index = 0;  // diffusion time the step started from
  double data_residual = 0.0;  // ||A x0 - y||
  double tv_z = 0.0;           // ||D_z x0||_1
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

/// Raised when a sampling step fails; carries the failing step.
class SamplerAbort : public NumericError {
 public:
  SamplerAbort(std::size_t step, std::size_t t_index, const std::string& reason)
      : NumericError("sampling step " + std::to_string(step) + " (t=" + std::to_string(t_index) +
                     ") aborted: " + reason),
        step_(step),
        t_index_(t_index) {}
  std::size_t step() const { return step_; }
  std::size_t t_index() const { return t_index_; }

 private:
  std::size_t step_, t_index_;
};

struct SamplerState {
  Volume3D x_t;
  Volume3D x0;  // latest denoised estimate
  Volume3D v;   // latest minimizer over the denoiser input
  // ADMM auxiliary and scaled dual (NERD-A).
  Volume3D z, w;
  // PDHG dual, primal image and extrapolated primal (NERD-P).
  Volume3D u, w_t, w_bar;
  std::size_t remaining = 0;  // sampling steps still to run
  Rng rng;
  std::vector<double> inner_losses;  // objective at each inner update of the last step
  std::size_t cg_unconverged = 0;

  friend bool operator==(const SamplerState&, const SamplerState&) = default;
};

struct RunResult {
  Volume3D reconstruction;
  std::vector<TraceRecord> trace;
  std::size_t cg_unconverged = 0;
};

/// The four reconstruction loops over a shared forward operator, denoiser and
/// schedule. Each step minimizes over the denoiser input (or, for the DDS
/// baseline, over the image), takes x0 and resamples to the previous time.
template <LinearOperator Op>
class Sampler {
 public:
  using Data = typename Op::range_type;

  Sampler(const Op& op, Data y, const Denoiser& prior, NoiseSchedule schedule, SamplerConfig config)
      : op_(op), y_(std::move(y)), prior_(prior), schedule_(std::move(schedule)), cfg_(config) {
    cfg_.validate();
    times_ = schedule_.sampling_steps(cfg_.steps);
    if (cfg_.inner == InnerSolver::exact)
      require(prior_.is_identity(), "Sampler: exact inner solves require the identity denoiser");
    aty_ = op_.adjoint(y_);
  }

  const SamplerConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const std::vector<std::size_t>& times() const { return times_; }
  const Data& measurements() const { return y_; }

  std::size_t current_time(const SamplerState& s) const {
    require(s.remaining >= 1 && s.remaining <= times_.size(), "Sampler: no sampling steps remaining");
    return times_[s.remaining - 1];
  }
  std::size_t previous_time(const SamplerState& s) const {
    return s.remaining >= 2 ? times_[s.remaining - 2] : 0;
  }

  /// x_{t_N} ~ N(0, I) drawn in voxel order from Rng(seed); ADMM and PDHG
  /// duals start at zero and the PDHG primal at f(x_{t_N}).
  SamplerState initialize(std::size_t nx, std::size_t ny, std::size_t nz) const {
    SamplerState s;
    s.rng = Rng(cfg_.seed);
    s.x_t = Volume3D(nx, ny, nz);
    for (double& val : s.x_t.values()) val = s.rng.normal();
    s.remaining = times_.size();
    s.x0 = Volume3D::zeros_like(s.x_t);
    s.v = s.x_t;
    s.z = Volume3D::zeros_like(s.x_t);
    s.w = Volume3D::zeros_like(s.x_t);
    s.u = Volume3D::zeros_like(s.x_t);
    if (cfg_.method == Method::nerd_p) {
      s.w_t = prior_.denoise(s.x_t, schedule_.alpha_bar(times_.back()));
      s.w_bar = s.w_t;
    }
    return s;
  }

  SamplerState initialize(const Volume3D& shape_like) const {
    return initialize(shape_like.nx(), shape_like.ny(), shape_like.nz());
  }

  // -------------------------------------------------------------------------
  // One sampling step per method: solve at the current time, then resample.

  void sitcom_step(SamplerState& s) const { advance(s, [&](double ab) { sitcom_solve(s, ab); }); }
  void nerd_a_step(SamplerState& s) const { advance(s, [&](double ab) { nerd_a_solve(s, ab); }); }
  void nerd_p_step(SamplerState& s) const { advance(s, [&](double ab) { nerd_p_solve(s, ab); }); }
  void dds_baseline_step(SamplerState& s) const { advance(s, [&](double ab) { dds_solve(s, ab); }); }

  void step(SamplerState& s) const {
    switch (cfg_.method) {
      case Method::sitcom: sitcom_step(s); break;
      case Method::nerd_a: nerd_a_step(s); break;
      case Method::nerd_p: nerd_p_step(s); break;
      case Method::dds: dds_baseline_step(s); break;
    }
  }

  /// One solver iteration of the configured method at a fixed alpha_bar,
  /// without resampling. Updates x0, v and the solver's persistent variables.
  void solve_at(SamplerState& s, double alpha_bar) const {
    switch (cfg_.method) {
      case Method::sitcom: sitcom_solve(s, alpha_bar); break;
      case Method::nerd_a: nerd_a_solve(s, alpha_bar); break;
      case Method::nerd_p: nerd_p_solve(s, alpha_bar); break;
      case Method::dds: dds_solve(s, alpha_bar); break;
    }
  }

  /// Runs all N steps and records one trace entry per step.
  RunResult run(const Volume3D& shape_like, const Volume3D* ground_truth = nullptr,
                const std::function<void(const TraceRecord&)>& on_step = {}) const {
    if (ground_truth) require_same_shape(shape_like, *ground_truth, "Sampler::run");
    SamplerState s = initialize(shape_like);
    RunResult out;
    const std::size_t n_steps = times_.size();
    for (std::size_t i = 1; i <= n_steps; ++i) {
      const std::size_t t = current_time(s);
      const auto start = std::chrono::steady_clock::now();
      try {
        step(s);
      } catch (const SamplerAbort&) {
        throw;
      } catch (const std::exception& e) {
        throw SamplerAbort(i, t, e.what());
      }
      const auto stop = std::chrono::steady_clock::now();
      TraceRecord rec;
      rec.step = i;
      rec.t_index = t;
      rec.data_residual = data_residual(s.x0);
      rec.tv_z = tv_z(s.x0);
      if (ground_truth) rec.psnr = evaluate_view(s.x0, *ground_truth, Axis::axial, false).psnr_mean;
      rec.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      out.trace.push_back(rec);
      if (on_step) on_step(rec);
    }
    out.reconstruction = s.x0;
    out.cg_unconverged = s.cg_unconverged;
    return out;
  }

  double data_residual(const Volume3D& x) const { return l2_norm(subtract(op_.apply(x), y_)); }

  /// ||A x - y||^2 + lambda_z ||D_z x||_1, the image-domain objective.
  double tv_objective(const Volume3D& x, double lambda_z) const {
    const double r = data_residual(x);
    return r * r + lambda_z * tv_z(x);
  }

 private:
  template <class Solve>
  void advance(SamplerState& s, Solve&& solve) const {
    const double ab = schedule_.alpha_bar(current_time(s));
    solve(ab);
    resample(s);
  }

  /// x_{t-1} = sqrt(abar_{t-1}) x0 + sqrt(1 - abar_{t-1}) eta. eta is always
  /// drawn, in voxel order, so every method consumes the same stream.
  void resample(SamplerState& s) const {
    const double ab_prev = schedule_.alpha_bar(previous_time(s));
    const double a = std::sqrt(ab_prev), b = std::sqrt(1.0 - ab_prev);
    auto x = s.x_t.values();
    auto x0 = s.x0.values();
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double eta = s.rng.normal();
      x[n] = ab_prev == 1.0 ? x0[n] : a * x0[n] + b * eta;
    }
    --s.remaining;
  }

  Volume3D normal_op(const Volume3D& x) const { return op_.adjoint(op_.apply(x)); }

  CgResult<Volume3D> exact_cg(const std::function<Volume3D(const Volume3D&)>& apply_m, const Volume3D& b,
                              Volume3D guess) const {
    return cg_solve(apply_m, b, std::move(guess), CgOptions{1e-13, 20 * b.size() + 100});
  }

  static void check_loss(double loss) {
    if (!std::isfinite(loss)) throw NumericError("non-finite inner loss");
  }

  // ---- SITCOM ------------------------------------------------------------

  void sitcom_solve(SamplerState& s, double ab) const { admm_primal_solve(s, ab, false); }

  // ---- NERD-A ------------------------------------------------------------

  void nerd_a_solve(SamplerState& s, double ab) const {
    const bool coupled = cfg_.rho > 0.0;
    admm_primal_solve(s, ab, coupled);
    if (!coupled) return;
    Volume3D dzx = dz_forward(s.x0);
    Volume3D arg = axpy(1.0, s.w, dzx);
    s.z = soft_threshold(arg, cfg_.lambda_z / cfg_.rho);
    axpy_inplace(1.0, dzx, s.w);
    axpy_inplace(-1.0, s.z, s.w);
  }

  /// min_v ||A f(v) - y||^2 + lambda ||v - x_t||^2 [+ rho/2 ||D_z f(v) - z + w||^2]
  /// from v = x_t, then x0 = f(v).
  void admm_primal_solve(SamplerState& s, double ab, bool coupled) const {
    s.inner_losses.clear();
    if (cfg_.inner == InnerSolver::exact) {
      // (2 A^T A + 2 lambda I + rho D^T D) v = 2 A^T y + 2 lambda x_t + rho D^T (z - w)
      const double rho = coupled ? cfg_.rho : 0.0;
      auto apply_m = [&](const Volume3D& v) {
        Volume3D out = scale(2.0, normal_op(v));
        axpy_inplace(2.0 * cfg_.lambda, v, out);
        if (rho > 0.0) axpy_inplace(rho, dz_adjoint(dz_forward(v)), out);
        return out;
      };
      Volume3D b = scale(2.0, aty_);
      axpy_inplace(2.0 * cfg_.lambda, s.x_t, b);
      if (rho > 0.0) axpy_inplace(rho, dz_adjoint(subtract(s.z, s.w)), b);
      auto res = exact_cg(apply_m, b, s.v);
      s.v = std::move(res.x);
      s.x0 = s.v;
      return;
    }
    Volume3D v = s.x_t;
    AdamState adam(v.size(), cfg_.adam_at(ab));
    for (std::size_t k = 0; k < cfg_.adam_updates; ++k) {
      const Volume3D f = prior_.denoise(v, ab);
      const Data r = subtract(op_.apply(f), y_);
      const Volume3D anchor = subtract(v, s.x_t);
      double loss = l2_norm_sq(r) + cfg_.lambda * l2_norm_sq(anchor);
      Volume3D cot = scale(2.0, op_.adjoint(r));
      if (coupled) {
        Volume3D gap = dz_forward(f);
        axpy_inplace(-1.0, s.z, gap);
        axpy_inplace(1.0, s.w, gap);
        loss += 0.5 * cfg_.rho * l2_norm_sq(gap);
        axpy_inplace(cfg_.rho, dz_adjoint(gap), cot);
      }
      check_loss(loss);
      s.inner_losses.push_back(loss);
      Volume3D grad = prior_.input_vjp(v, ab, cot);
      axpy_inplace(2.0 * cfg_.lambda, anchor, grad);
      adam_step(adam, v.values(), grad.values());
    }
    s.x0 = prior_.denoise(v, ab);
    s.v = std::move(v);
  }

  // ---- NERD-P ------------------------------------------------------------

  void nerd_p_solve(SamplerState& s, double ab) const {
    const double kz = cfg_.lambda_z;  // K = lambda_z D_z, dual in the unit ball
    if (cfg_.pdhg_order == PdhgOrder::primal_first) {
      s.w_bar = s.w_t;                                                       // 1
      Volume3D w_hat = axpy(-cfg_.tau * kz, dz_adjoint(s.u), s.w_bar);        // 2
      nerd_p_primal(s, ab, w_hat);                                           // 3
      s.w_bar = linear_combination(2.0, s.w_t, -1.0, s.w_bar);               // 4
      Volume3D u_hat = axpy(cfg_.sigma * kz, dz_forward(s.w_bar), s.u);      // 5
      s.u = project_linf_ball(u_hat);                                        // 6
    } else {
      Volume3D u_hat = axpy(cfg_.sigma * kz, dz_forward(s.w_bar), s.u);
      s.u = project_linf_ball(u_hat);
      const Volume3D w_old = s.w_t;
      Volume3D w_hat = axpy(-cfg_.tau * kz, dz_adjoint(s.u), w_old);
      nerd_p_primal(s, ab, w_hat);
      s.w_bar = linear_combination(2.0, s.w_t, -1.0, w_old);
    }
    if (linf_norm(s.u) > 1.0) throw std::logic_error("NERD-P dual left the unit ball");
    s.x0 = prior_.denoise(s.v, ab);                                          // 7
  }

  /// min_{v, w} ||A w - y||^2 + lambda ||v - x_t||^2 + 1/(2 tau) ||w - w_hat||^2
  ///            + lambda' ||f(v) - w||^2
  void nerd_p_primal(SamplerState& s, double ab, const Volume3D& w_hat) const {
    s.inner_losses.clear();
    const double lam = cfg_.lambda, lamp = cfg_.lambda_prime, tau = cfg_.tau;
    if (cfg_.inner == InnerSolver::exact) {
      // Eliminating v = (lam x_t + lam' w) / (lam + lam') leaves
      // (2 A^T A + (1/tau + 2c) I) w = 2 A^T y + w_hat / tau + 2c x_t.
      const double denom = lam + lamp;
      const double c = denom > 0.0 ? lam * lamp / denom : 0.0;
      auto apply_m = [&](const Volume3D& w) {
        Volume3D out = scale(2.0, normal_op(w));
        axpy_inplace(1.0 / tau + 2.0 * c, w, out);
        return out;
      };
      Volume3D b = scale(2.0, aty_);
      axpy_inplace(1.0 / tau, w_hat, b);
      axpy_inplace(2.0 * c, s.x_t, b);
      auto res = exact_cg(apply_m, b, s.w_t);
      s.w_t = std::move(res.x);
      s.v = denom > 0.0 ? linear_combination(lam / denom, s.x_t, lamp / denom, s.w_t) : s.x_t;
      return;
    }
    Volume3D v = s.x_t;
    Volume3D w = w_hat;
    AdamState adam_v(v.size(), cfg_.adam_at(ab));
    AdamState adam_w(w.size(), cfg_.adam_at(ab));
    for (std::size_t k = 0; k < cfg_.adam_updates; ++k) {
      const Volume3D f = prior_.denoise(v, ab);
      const Data r = subtract(op_.apply(w), y_);
      const Volume3D anchor = subtract(v, s.x_t);
      const Volume3D prox = subtract(w, w_hat);
      const Volume3D couple = subtract(f, w);
      const double loss = l2_norm_sq(r) + lam * l2_norm_sq(anchor) + 0.5 / tau * l2_norm_sq(prox) +
                          lamp * l2_norm_sq(couple);
      check_loss(loss);
      s.inner_losses.push_back(loss);
      Volume3D grad_v = prior_.input_vjp(v, ab, scale(2.0 * lamp, couple));
      axpy_inplace(2.0 * lam, anchor, grad_v);
      Volume3D grad_w = scale(2.0, op_.adjoint(r));
      axpy_inplace(1.0 / tau, prox, grad_w);
      axpy_inplace(-2.0 * lamp, couple, grad_w);
      adam_step(adam_v, v.values(), grad_v.values());
      adam_step(adam_w, w.values(), grad_w.values());
    }
    s.v = std::move(v);
    s.w_t = std::move(w);
  }

  // ---- DDS baseline ------------------------------------------------------

  /// x0 = f(x_t), then ADMM on ||A x - y||^2 + gamma ||D_z x||_1 started at
  /// x0 with CG primal updates.
  void dds_solve(SamplerState& s, double ab) const {
    s.inner_losses.clear();
    Volume3D x = prior_.denoise(s.x_t, ab);
    if (cfg_.dds_admm_iterations > 0) {
      const double rho = cfg_.rho;
      const double gamma = cfg_.gamma();
      Volume3D z = dz_forward(x);
      Volume3D w = Volume3D::zeros_like(x);
      auto apply_m = [&](const Volume3D& v) {
        Volume3D out = scale(2.0, normal_op(v));
        if (rho > 0.0) axpy_inplace(rho, dz_adjoint(dz_forward(v)), out);
        return out;
      };
      for (std::size_t m = 0; m < cfg_.dds_admm_iterations; ++m) {
        Volume3D b = scale(2.0, aty_);
        if (rho > 0.0) axpy_inplace(rho, dz_adjoint(subtract(z, w)), b);
        auto res = cg_solve(apply_m, b, x, CgOptions{cfg_.cg_tol, cfg_.cg_max_iter});
        if (!res.converged) ++s.cg_unconverged;
        x = std::move(res.x);
        const Volume3D dzx = dz_forward(x);
        if (rho > 0.0) {
          z = soft_threshold(axpy(1.0, w, dzx), gamma / rho);
          axpy_inplace(1.0, dzx, w);
          axpy_inplace(-1.0, z, w);
        }
        const double r = data_residual(x);
        const double loss = r * r + gamma * tv_z(x);
        check_loss(loss);
        s.inner_losses.push_back(loss);
      }
    }
    s.x0 = std::move(x);
  }

  const Op& op_;
  Data y_;
  const Denoiser& prior_;
  NoiseSchedule schedule_;
  SamplerConfig cfg_;
  std::vector<std::size_t> times_;
  Volume3D aty_;
};

/// Convenience wrapper: builds a sampler and runs it.
template <LinearOperator Op>
RunResult run_sampler(const SamplerConfig& config, const Op& op, const typename Op::range_type& y,
                      const Denoiser& prior, const NoiseSchedule& schedule, const Volume3D& shape_like,
                      const Volume3D* ground_truth = nullptr,
                      const std::function<void(const TraceRecord&)>& on_step = {}) {
  Sampler<Op> sampler(op, y, prior, schedule, config);
  return sampler.run(shape_like, ground_truth, on_step);
}

}  // namespace nerd
