#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/volume.hpp"

namespace nerd {

/// 10 log10(range^2 / MSE); +inf when the inputs are identical.
template <DenseField F>
double psnr(const F& estimate, const F& reference, double data_range = 1.0) {
  require_same_shape(estimate, reference, "psnr");
  require(data_range > 0.0, "psnr: data_range must be positive");
  auto a = estimate.values();
  auto b = reference.values();
  double sse = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) sse += (a[n] - b[n]) * (a[n] - b[n]);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(data_range * data_range / mse);
}

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Normalized 1D Gaussian taps.
inline std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double c = 0.5 * static_cast<double>(size - 1);
  double total = 0.0;
  for (std::size_t n = 0; n < size; ++n) {
    const double d = static_cast<double>(n) - c;
    taps[n] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[n];
  }
  for (double& t : taps) t /= total;
  return taps;
}

namespace detail {

/// Separable Gaussian filter keeping only full-window ("valid") positions.
inline std::vector<double> filter_valid(const std::vector<double>& img, std::size_t W, std::size_t H,
                                        const std::vector<double>& taps) {
  const std::size_t win = taps.size();
  const std::size_t ow = W - win + 1, oh = H - win + 1;
  std::vector<double> rows(ow * H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < win; ++t) acc += taps[t] * img[y * W + x + t];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < win; ++t) acc += taps[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM over all full 11x11 Gaussian windows (sigma 1.5, K1 0.01,
/// K2 0.03, range 1 by default).
inline double ssim_2d(const Slice2D& a, const Slice2D& b, const SsimParams& p = {}) {
  require(a.same_shape(b), "ssim_2d: shape mismatch");
  require(a.width >= p.window && a.height >= p.window, "ssim_2d: slice smaller than the SSIM window");
  const std::size_t W = a.width, H = a.height;
  const auto taps = gaussian_taps(p.window, p.sigma);
  std::vector<double> aa(W * H), bb(W * H), ab(W * H);
  for (std::size_t n = 0; n < W * H; ++n) {
    aa[n] = a.data[n] * a.data[n];
    bb[n] = b.data[n] * b.data[n];
    ab[n] = a.data[n] * b.data[n];
  }
  const auto mu_a = detail::filter_valid(a.data, W, H, taps);
  const auto mu_b = detail::filter_valid(b.data, W, H, taps);
  const auto e_aa = detail::filter_valid(aa, W, H, taps);
  const auto e_bb = detail::filter_valid(bb, W, H, taps);
  const auto e_ab = detail::filter_valid(ab, W, H, taps);
  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  double total = 0.0;
  for (std::size_t n = 0; n < mu_a.size(); ++n) {
    const double ma = mu_a[n], mb = mu_b[n];
    const double va = e_aa[n] - ma * ma;
    const double vb = e_bb[n] - mb * mb;
    const double cov = e_ab[n] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

struct ViewStats {
  Axis axis = Axis::axial;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
};

/// Slice-wise quality per anatomical view.
struct Report {
  std::array<ViewStats, 3> views;
  double data_range = 1.0;

  const ViewStats& view(Axis a) const { return views[static_cast<std::size_t>(a)]; }
};

/// Mean and population standard deviation. Any +inf entry makes the mean
/// +inf; the std is then 0 if every entry is +inf and +inf otherwise.
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  std::size_t n_inf = 0;
  for (double x : xs)
    if (std::isinf(x)) ++n_inf;
  if (n_inf > 0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, n_inf == xs.size() ? 0.0 : inf};
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

/// Per-slice PSNR and SSIM along one axis. SSIM is skipped (NaN mean and
/// std, empty list) when the slices are smaller than the SSIM window.
inline ViewStats evaluate_view(const Volume3D& estimate, const Volume3D& reference, Axis axis, bool with_ssim = true,
                               double data_range = 1.0) {
  require_same_shape(estimate, reference, "evaluate_view");
  ViewStats vs;
  vs.axis = axis;
  const std::size_t n = slice_count(reference, axis);
  if (with_ssim && n > 0) {
    const Slice2D probe = extract_slice(reference, axis, 0);
    const SsimParams p;
    if (probe.width < p.window || probe.height < p.window) {
      with_ssim = false;
      vs.ssim_mean = vs.ssim_std = std::numeric_limits<double>::quiet_NaN();
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    const Slice2D a = extract_slice(estimate, axis, s);
    const Slice2D b = extract_slice(reference, axis, s);
    vs.psnr.push_back(psnr(a, b, data_range));
    if (with_ssim) vs.ssim.push_back(ssim_2d(a, b, SsimParams{.data_range = data_range}));
  }
  std::tie(vs.psnr_mean, vs.psnr_std) = mean_std(vs.psnr);
  if (with_ssim) std::tie(vs.ssim_mean, vs.ssim_std) = mean_std(vs.ssim);
  return vs;
}

inline Report evaluate_volume(const Volume3D& estimate, const Volume3D& reference, double data_range = 1.0) {
  require_same_shape(estimate, reference, "evaluate_volume");
  Report r;
  r.data_range = data_range;
  for (Axis a : {Axis::axial, Axis::coronal, Axis::sagittal})
    r.views[static_cast<std::size_t>(a)] = evaluate_view(estimate, reference, a, true, data_range);
  return r;
}

/// Slice-mean PSNR averaged over the three views.
inline double mean_view_psnr(const Volume3D& estimate, const Volume3D& reference) {
  require_same_shape(estimate, reference, "mean_view_psnr");
  double total = 0.0;
  for (Axis a : {Axis::axial, Axis::coronal, Axis::sagittal})
    total += evaluate_view(estimate, reference, a, false).psnr_mean;
  return total / 3.0;
}

}  // namespace nerd
