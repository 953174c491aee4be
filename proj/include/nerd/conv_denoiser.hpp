#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/optim.hpp"
#include "nerd/priors.hpp"
#include "nerd/rng.hpp"
#include "nerd/schedule.hpp"
#include "nerd/volume.hpp"

namespace nerd {

struct ConvLayerShape {
  std::size_t in_channels;
  std::size_t out_channels;
};

/// Three 3x3 convolutions (2 -> 8 -> 8 -> 1 channels, zero "same" padding)
/// with ReLU between layers. Input channel 0 is the noisy slice, channel 1 a
/// constant sqrt(1 - abar) carrying the noise level. The network predicts
/// eps and the denoiser output is Tweedie's x0 estimate.
///
/// Weights are one flat vector: for each layer W[out][in][ky][kx] followed by
/// bias[out].
class ConvDenoiser final : public Denoiser {
 public:
  static constexpr std::size_t kKernel = 3;
  static constexpr std::array<ConvLayerShape, 3> kLayers{{{2, 8}, {8, 8}, {8, 1}}};

  static constexpr std::size_t layer_weight_count(std::size_t l) {
    return kLayers[l].out_channels * kLayers[l].in_channels * kKernel * kKernel;
  }
  static constexpr std::size_t layer_param_count(std::size_t l) {
    return layer_weight_count(l) + kLayers[l].out_channels;
  }
  static constexpr std::size_t parameter_count() {
    return layer_param_count(0) + layer_param_count(1) + layer_param_count(2);
  }
  static constexpr std::size_t layer_offset(std::size_t l) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < l; ++i) off += layer_param_count(i);
    return off;
  }

  /// He-normal weights drawn from Rng(seed), zero biases.
  static std::vector<double> initial_weights(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(parameter_count(), 0.0);
    for (std::size_t l = 0; l < kLayers.size(); ++l) {
      const double std_dev = std::sqrt(2.0 / static_cast<double>(kLayers[l].in_channels * kKernel * kKernel));
      const std::size_t off = layer_offset(l);
      for (std::size_t n = 0; n < layer_weight_count(l); ++n) w[off + n] = std_dev * rng.normal();
    }
    return w;
  }

  ConvDenoiser() : weights_(parameter_count(), 0.0) {}

  explicit ConvDenoiser(std::vector<double> weights) : weights_(std::move(weights)) {
    require(weights_.size() == parameter_count(), "ConvDenoiser: weight vector has wrong length");
    require(all_finite(weights_), "ConvDenoiser: non-finite weight");
  }

  const std::vector<double>& weights() const { return weights_; }

  /// Intermediate activations kept for the reverse pass. Channel buffers are
  /// C x H x W.
  struct Tape {
    std::size_t width = 0, height = 0;
    std::vector<double> input;  // 2 channels
    std::vector<double> pre1, act1, pre2, act2;
  };

  Slice2D predict_noise(const Slice2D& x, double alpha_bar, Tape* tape = nullptr) const {
    require(x.width > 0 && x.height > 0, "ConvDenoiser: empty slice");
    require(alpha_bar > 0.0 && alpha_bar <= 1.0, "ConvDenoiser: alpha_bar must lie in (0, 1]");
    Tape local;
    Tape& tp = tape ? *tape : local;
    const std::size_t W = x.width, H = x.height, P = W * H;
    tp.width = W;
    tp.height = H;
    tp.input.assign(2 * P, std::sqrt(1.0 - alpha_bar));
    std::copy(x.data.begin(), x.data.end(), tp.input.begin());

    tp.pre1 = conv(0, tp.input, W, H);
    tp.act1 = relu(tp.pre1);
    tp.pre2 = conv(1, tp.act1, W, H);
    tp.act2 = relu(tp.pre2);
    std::vector<double> out = conv(2, tp.act2, W, H);
    Slice2D eps(W, H);
    eps.data = std::move(out);
    return eps;
  }

  /// Reverse pass for the cotangent of the predicted noise. Either output may
  /// be null. `grad_weights` is accumulated into, not overwritten.
  void backward(const Tape& tp, const Slice2D& cot_eps, Slice2D* grad_input, std::vector<double>* grad_weights) const {
    const std::size_t W = tp.width, H = tp.height;
    require(cot_eps.width == W && cot_eps.height == H, "ConvDenoiser::backward: shape mismatch");
    if (grad_weights) {
      require(grad_weights->size() == parameter_count(), "ConvDenoiser::backward: gradient buffer has wrong length");
    }
    std::vector<double> g3 = cot_eps.data;
    std::vector<double> g_act2 = conv_backward(2, tp.act2, g3, W, H, grad_weights);
    relu_backward(tp.pre2, g_act2);
    std::vector<double> g_act1 = conv_backward(1, tp.act1, g_act2, W, H, grad_weights);
    relu_backward(tp.pre1, g_act1);
    std::vector<double> g_in = conv_backward(0, tp.input, g_act1, W, H, grad_weights);
    if (grad_input) {
      *grad_input = Slice2D(W, H);
      std::copy(g_in.begin(), g_in.begin() + static_cast<long>(W * H), grad_input->data.begin());
    }
  }

  /// Gradient of <cot, eps_theta(x)> with respect to x.
  Slice2D noise_input_vjp(const Slice2D& x, double alpha_bar, const Slice2D& cot_eps) const {
    Tape tp;
    predict_noise(x, alpha_bar, &tp);
    Slice2D g;
    backward(tp, cot_eps, &g, nullptr);
    return g;
  }

  /// Gradient of <cot, eps_theta(x)> with respect to the weights.
  std::vector<double> noise_weight_grad(const Slice2D& x, double alpha_bar, const Slice2D& cot_eps) const {
    Tape tp;
    predict_noise(x, alpha_bar, &tp);
    std::vector<double> g(parameter_count(), 0.0);
    backward(tp, cot_eps, nullptr, &g);
    return g;
  }

  /// Smallest |pre-activation| over both ReLU layers; finite-difference checks
  /// use it to stay away from kinks.
  double min_abs_preactivation(const Slice2D& x, double alpha_bar) const {
    Tape tp;
    predict_noise(x, alpha_bar, &tp);
    double m = std::numeric_limits<double>::infinity();
    for (double v : tp.pre1) m = std::min(m, std::abs(v));
    for (double v : tp.pre2) m = std::min(m, std::abs(v));
    return m;
  }

  Slice2D denoise_slice(const Slice2D& x, double alpha_bar) const {
    Slice2D eps = predict_noise(x, alpha_bar);
    return tweedie_denoise(x, alpha_bar, eps);
  }

  Volume3D denoise(const Volume3D& x_t, double alpha_bar) const override {
    Volume3D out = Volume3D::zeros_like(x_t);
    for (std::size_t k = 0; k < x_t.nz(); ++k) {
      Slice2D s = extract_slice(x_t, Axis::axial, k);
      insert_slice(out, Axis::axial, k, denoise_slice(s, alpha_bar));
    }
    return out;
  }

  /// d x0 / d x_t = (I - sqrt(1 - abar) J_eps) / sqrt(abar), transposed.
  Volume3D input_vjp(const Volume3D& x_t, double alpha_bar, const Volume3D& cotangent) const override {
    require_same_shape(x_t, cotangent, "ConvDenoiser::input_vjp");
    Volume3D out = Volume3D::zeros_like(x_t);
    const double inv_a = 1.0 / std::sqrt(alpha_bar);
    const double noise_scale = std::sqrt(1.0 - alpha_bar);
    for (std::size_t k = 0; k < x_t.nz(); ++k) {
      Slice2D s = extract_slice(x_t, Axis::axial, k);
      Slice2D cot = extract_slice(cotangent, Axis::axial, k);
      Slice2D g = noise_input_vjp(s, alpha_bar, cot);
      for (std::size_t n = 0; n < g.data.size(); ++n) g.data[n] = inv_a * (cot.data[n] - noise_scale * g.data[n]);
      insert_slice(out, Axis::axial, k, g);
    }
    return out;
  }

 private:
  std::vector<double> conv(std::size_t l, const std::vector<double>& in, std::size_t W, std::size_t H) const {
    const std::size_t Ci = kLayers[l].in_channels, Co = kLayers[l].out_channels, P = W * H;
    const double* w = weights_.data() + layer_offset(l);
    const double* bias = w + layer_weight_count(l);
    std::vector<double> out(Co * P);
    for (std::size_t o = 0; o < Co; ++o) {
      double* dst = out.data() + o * P;
      std::fill(dst, dst + P, bias[o]);
      for (std::size_t i = 0; i < Ci; ++i) {
        const double* src = in.data() + i * P;
        const double* kern = w + (o * Ci + i) * kKernel * kKernel;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const double k = kern[ky * kKernel + kx];
            if (k == 0.0) continue;
            const long dy = static_cast<long>(ky) - 1, dx = static_cast<long>(kx) - 1;
            for (std::size_t y = 0; y < H; ++y) {
              const long sy = static_cast<long>(y) + dy;
              if (sy < 0 || sy >= static_cast<long>(H)) continue;
              const std::size_t x_lo = dx < 0 ? 1 : 0;
              const std::size_t x_hi = dx > 0 ? W - 1 : W;
              const double* srow = src + static_cast<std::size_t>(sy) * W;
              double* drow = dst + y * W;
              for (std::size_t x = x_lo; x < x_hi; ++x) drow[x] += k * srow[static_cast<long>(x) + dx];
            }
          }
        }
      }
    }
    return out;
  }

  /// Returns the gradient with respect to `in`; accumulates weight and bias
  /// gradients when `gw` is non-null.
  std::vector<double> conv_backward(std::size_t l, const std::vector<double>& in, const std::vector<double>& g_out,
                                    std::size_t W, std::size_t H, std::vector<double>* gw) const {
    const std::size_t Ci = kLayers[l].in_channels, Co = kLayers[l].out_channels, P = W * H;
    const double* w = weights_.data() + layer_offset(l);
    double* gwl = gw ? gw->data() + layer_offset(l) : nullptr;
    std::vector<double> g_in(Ci * P, 0.0);
    for (std::size_t o = 0; o < Co; ++o) {
      const double* go = g_out.data() + o * P;
      if (gwl) {
        double gb = 0.0;
        for (std::size_t p = 0; p < P; ++p) gb += go[p];
        gwl[layer_weight_count(l) + o] += gb;
      }
      for (std::size_t i = 0; i < Ci; ++i) {
        const double* src = in.data() + i * P;
        double* gi = g_in.data() + i * P;
        const std::size_t kbase = (o * Ci + i) * kKernel * kKernel;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const double k = w[kbase + ky * kKernel + kx];
            const long dy = static_cast<long>(ky) - 1, dx = static_cast<long>(kx) - 1;
            const std::size_t x_lo = dx < 0 ? 1 : 0;
            const std::size_t x_hi = dx > 0 ? W - 1 : W;
            double gk = 0.0;
            for (std::size_t y = 0; y < H; ++y) {
              const long sy = static_cast<long>(y) + dy;
              if (sy < 0 || sy >= static_cast<long>(H)) continue;
              const double* srow = src + static_cast<std::size_t>(sy) * W;
              double* girow = gi + static_cast<std::size_t>(sy) * W;
              const double* grow = go + y * W;
              for (std::size_t x = x_lo; x < x_hi; ++x) {
                const std::size_t sx = static_cast<std::size_t>(static_cast<long>(x) + dx);
                gk += grow[x] * srow[sx];
                girow[sx] += k * grow[x];
              }
            }
            if (gwl) gwl[kbase + ky * kKernel + kx] += gk;
          }
        }
      }
    }
    return g_in;
  }

  static std::vector<double> relu(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) out[n] = v[n] > 0.0 ? v[n] : 0.0;
    return out;
  }

  static void relu_backward(const std::vector<double>& pre, std::vector<double>& g) {
    for (std::size_t n = 0; n < g.size(); ++n)
      if (!(pre[n] > 0.0)) g[n] = 0.0;
  }

  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Training on the standard denoising objective
//   E || eps - eps_theta(sqrt(abar) x0 + sqrt(1 - abar) eps, t) ||^2.

struct TrainOptions {
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> weights;
  std::vector<double> loss_history;  // one entry per slice update
};

namespace detail {

inline void validate_training_slices(const std::vector<Slice2D>& slices) {
  require(!slices.empty(), "train_denoiser: empty training set");
  for (const auto& s : slices) {
    require(s.width > 0 && s.height > 0, "train_denoiser: empty slice");
    for (double v : s.data) require(v >= 0.0 && v <= 1.0, "train_denoiser: slice values must lie in [0, 1]");
  }
}

/// Draws (t, eps) and forms x_t for one slice.
inline Slice2D noisy_sample(const Slice2D& x0, const NoiseSchedule& schedule, Rng& rng, double& alpha_bar,
                            Slice2D& eps) {
  const std::size_t t = 1 + static_cast<std::size_t>(rng.below(schedule.T()));
  alpha_bar = schedule.alpha_bar(t);
  eps = Slice2D(x0.width, x0.height);
  for (double& e : eps.data) e = rng.normal();
  Slice2D x_t(x0.width, x0.height);
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  for (std::size_t n = 0; n < x_t.data.size(); ++n) x_t.data[n] = a * x0.data[n] + b * eps.data[n];
  return x_t;
}

}  // namespace detail

/// Adam on per-slice minibatches. The RNG stream (seeded by options.seed)
/// drives the epoch shuffles and the (t, eps) draws; `initial` defaults to
/// ConvDenoiser::initial_weights(options.seed).
inline TrainResult train_denoiser(const std::vector<Slice2D>& slices, const NoiseSchedule& schedule,
                                  const TrainOptions& options, std::vector<double> initial = {}) {
  detail::validate_training_slices(slices);
  TrainResult result;
  result.weights = initial.empty() ? ConvDenoiser::initial_weights(options.seed) : std::move(initial);
  require(result.weights.size() == ConvDenoiser::parameter_count(), "train_denoiser: wrong initial weight count");
  AdamState adam(result.weights.size(), AdamConfig{options.lr, 0.9, 0.999, 1e-8});
  Rng rng(options.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(slices.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
    for (std::size_t n = order.size(); n > 1; --n) std::swap(order[n - 1], order[rng.below(n)]);
    for (std::size_t idx : order) {
      const Slice2D& x0 = slices[idx];
      double alpha_bar = 1.0;
      Slice2D eps;
      Slice2D x_t = detail::noisy_sample(x0, schedule, rng, alpha_bar, eps);
      ConvDenoiser net(result.weights);
      ConvDenoiser::Tape tape;
      Slice2D pred = net.predict_noise(x_t, alpha_bar, &tape);
      const double inv_n = 1.0 / static_cast<double>(pred.data.size());
      double loss = 0.0;
      Slice2D cot(pred.width, pred.height);
      for (std::size_t p = 0; p < pred.data.size(); ++p) {
        const double r = pred.data[p] - eps.data[p];
        loss += r * r * inv_n;
        cot.data[p] = 2.0 * r * inv_n;
      }
      if (!std::isfinite(loss)) throw NumericError("train_denoiser: non-finite loss");
      std::vector<double> grad(result.weights.size(), 0.0);
      net.backward(tape, cot, nullptr, &grad);
      adam_step(adam, result.weights, grad);
      result.loss_history.push_back(loss);
    }
  }
  return result;
}

struct DenoisingLoss {
  double model = 0.0;     // mean squared eps error of the network
  double baseline = 0.0;  // same for eps_hat = sqrt(1 - abar) x_t
};

/// Held-out evaluation: `draws` noisy samples per slice from Rng(seed), the
/// network and the scaled-identity predictor scored on identical draws.
inline DenoisingLoss denoising_loss(const std::vector<double>& weights, const std::vector<Slice2D>& slices,
                                    const NoiseSchedule& schedule, std::uint64_t seed, std::size_t draws = 4) {
  detail::validate_training_slices(slices);
  ConvDenoiser net(weights);
  Rng rng(seed);
  DenoisingLoss out;
  std::size_t count = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (const auto& x0 : slices) {
      double alpha_bar = 1.0;
      Slice2D eps;
      Slice2D x_t = detail::noisy_sample(x0, schedule, rng, alpha_bar, eps);
      Slice2D pred = net.predict_noise(x_t, alpha_bar);
      const double b = std::sqrt(1.0 - alpha_bar);
      for (std::size_t p = 0; p < pred.data.size(); ++p) {
        const double r = pred.data[p] - eps.data[p];
        const double rb = b * x_t.data[p] - eps.data[p];
        out.model += r * r;
        out.baseline += rb * rb;
      }
      count += pred.data.size();
    }
  }
  out.model /= static_cast<double>(count);
  out.baseline /= static_cast<double>(count);
  return out;
}

}  // namespace nerd
