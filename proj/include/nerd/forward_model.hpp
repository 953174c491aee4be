#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/rng.hpp"
#include "nerd/volume.hpp"

namespace nerd {

/// Parallel-beam geometry for one axial slice. Angles are uniform on
/// [0, pi); detector bins are centred on the rotation axis.
struct ProjectionGeometry {
  std::size_t n_angles_full = 180;
  std::size_t n_detectors = 1;
  double detector_spacing = 1.0;

  /// 180 angles, ceil(sqrt(2)*n) bins of unit spacing.
  static ProjectionGeometry standard(std::size_t n) {
    return {180, static_cast<std::size_t>(std::ceil(std::numbers::sqrt2 * static_cast<double>(n))), 1.0};
  }

  double angle(std::size_t a) const {
    return std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles_full);
  }

  double detector_offset(std::size_t d) const {
    return (static_cast<double>(d) - 0.5 * static_cast<double>(n_detectors - 1)) * detector_spacing;
  }

  void validate() const {
    require(n_angles_full >= 1, "ProjectionGeometry: n_angles_full must be >= 1");
    require(n_detectors >= 1, "ProjectionGeometry: n_detectors must be >= 1");
    require(detector_spacing > 0.0 && std::isfinite(detector_spacing),
            "ProjectionGeometry: detector_spacing must be positive");
  }

  friend bool operator==(const ProjectionGeometry&, const ProjectionGeometry&) = default;
};

/// Strictly increasing subset of the full angle indices.
struct ViewSubsampling {
  std::vector<std::size_t> indices;

  static ViewSubsampling all(std::size_t n_full) {
    ViewSubsampling s;
    for (std::size_t a = 0; a < n_full; ++a) s.indices.push_back(a);
    return s;
  }

  /// floor(i * n_full / n_views) for i = 0..n_views-1.
  static ViewSubsampling uniform(std::size_t n_full, std::size_t n_views) {
    require(n_views >= 1 && n_views <= n_full, "ViewSubsampling: need 1 <= n_views <= n_angles_full");
    ViewSubsampling s;
    for (std::size_t i = 0; i < n_views; ++i) s.indices.push_back(i * n_full / n_views);
    return s;
  }

  std::size_t size() const { return indices.size(); }

  void validate(std::size_t n_full) const {
    require(!indices.empty(), "ViewSubsampling: empty selection");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      require(indices[i] < n_full, "ViewSubsampling: index out of range");
      require(i == 0 || indices[i] > indices[i - 1], "ViewSubsampling: indices must be strictly increasing");
    }
  }

  friend bool operator==(const ViewSubsampling&, const ViewSubsampling&) = default;
};

/// Measurement stack. Element (view, detector, slice) lives at
/// detector + n_detectors*(view + n_views*slice).
class Sinogram3D {
 public:
  Sinogram3D() = default;
  Sinogram3D(std::size_t n_views, std::size_t n_detectors, std::size_t nz, double fill = 0.0)
      : n_views_(n_views), n_detectors_(n_detectors), nz_(nz) {
    require(n_views > 0 && n_detectors > 0 && nz > 0, "Sinogram3D: dimensions must be positive");
    data_.assign(n_views * n_detectors * nz, fill);
  }
  Sinogram3D(std::size_t n_views, std::size_t n_detectors, std::size_t nz, std::vector<double> data)
      : n_views_(n_views), n_detectors_(n_detectors), nz_(nz), data_(std::move(data)) {
    require(n_views > 0 && n_detectors > 0 && nz > 0, "Sinogram3D: dimensions must be positive");
    require(data_.size() == n_views * n_detectors * nz, "Sinogram3D: data length mismatch");
    require(all_finite(data_), "Sinogram3D: non-finite value");
  }

  std::size_t n_views() const { return n_views_; }
  std::size_t n_detectors() const { return n_detectors_; }
  std::size_t nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return n_views_ * n_detectors_; }

  std::size_t index(std::size_t view, std::size_t det, std::size_t k) const {
    return det + n_detectors_ * (view + n_views_ * k);
  }
  double& operator()(std::size_t view, std::size_t det, std::size_t k) { return data_[index(view, det, k)]; }
  double operator()(std::size_t view, std::size_t det, std::size_t k) const {
    return data_[index(view, det, k)];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  bool same_shape(const Sinogram3D& o) const {
    return n_views_ == o.n_views_ && n_detectors_ == o.n_detectors_ && nz_ == o.nz_;
  }

  friend bool operator==(const Sinogram3D&, const Sinogram3D&) = default;

 private:
  std::size_t n_views_ = 0, n_detectors_ = 0, nz_ = 0;
  std::vector<double> data_;
};

/// Sparse system matrix of the 2D ray-driven projector for one n x n slice.
///
/// Each ray (angle theta, detector offset s) is sampled at unit steps
///   p(t) = s (cos theta, sin theta) + t (-sin theta, cos theta),  t integer,
/// and every sample bilinearly interpolates the four surrounding pixel
/// centres (pixel (i, j) sits at (i - (n-1)/2, j - (n-1)/2)). The row stores
/// the merged interpolation weights, so forward gather and adjoint scatter
/// use identical coefficients.
class SliceProjector {
 public:
  SliceProjector() = default;

  SliceProjector(std::size_t n, const ProjectionGeometry& geom, const std::vector<std::size_t>& angle_indices)
      : n_(n), n_detectors_(geom.n_detectors), n_views_(angle_indices.size()) {
    require(n > 0, "SliceProjector: empty slice");
    const double centre = 0.5 * static_cast<double>(n - 1);
    const double half_diag = std::numbers::sqrt2 * 0.5 * static_cast<double>(n) + 1.0;
    const long half_samples = static_cast<long>(std::ceil(half_diag));
    const long ln = static_cast<long>(n);

    std::vector<std::pair<std::uint32_t, double>> row;
    row_ptr_.reserve(n_views_ * n_detectors_ + 1);
    row_ptr_.push_back(0);
    for (std::size_t a : angle_indices) {
      const double theta = geom.angle(a);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      for (std::size_t d = 0; d < n_detectors_; ++d) {
        const double offset = geom.detector_offset(d);
        row.clear();
        for (long m = -half_samples; m <= half_samples; ++m) {
          const double t = static_cast<double>(m);
          const double fx = offset * c - t * s + centre;
          const double fy = offset * s + t * c + centre;
          const double x0 = std::floor(fx);
          const double y0 = std::floor(fy);
          const double ax = fx - x0;
          const double ay = fy - y0;
          const long i0 = static_cast<long>(x0);
          const long j0 = static_cast<long>(y0);
          const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
          const long di[4] = {0, 1, 0, 1};
          const long dj[4] = {0, 0, 1, 1};
          for (int q = 0; q < 4; ++q) {
            const long i = i0 + di[q];
            const long j = j0 + dj[q];
            if (i < 0 || j < 0 || i >= ln || j >= ln || wts[q] == 0.0) continue;
            row.emplace_back(static_cast<std::uint32_t>(i + ln * j), wts[q]);
          }
        }
        std::stable_sort(row.begin(), row.end(),
                         [](const auto& l, const auto& r) { return l.first < r.first; });
        for (std::size_t e = 0; e < row.size(); ++e) {
          if (col_.size() > row_ptr_.back() && col_.back() == row[e].first) {
            weight_.back() += row[e].second;
          } else {
            col_.push_back(row[e].first);
            weight_.push_back(row[e].second);
          }
        }
        row_ptr_.push_back(col_.size());
      }
    }
  }

  std::size_t side() const { return n_; }
  std::size_t rows() const { return n_views_ * n_detectors_; }
  std::size_t nonzeros() const { return col_.size(); }

  void forward(std::span<const double> image, std::span<double> sino) const {
    for (std::size_t r = 0; r < rows(); ++r) {
      double acc = 0.0;
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) acc += weight_[e] * image[col_[e]];
      sino[r] = acc;
    }
  }

  /// image += T^T sino
  void adjoint_accumulate(std::span<const double> sino, std::span<double> image) const {
    for (std::size_t r = 0; r < rows(); ++r) {
      const double val = sino[r];
      if (val == 0.0) continue;
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) image[col_[e]] += weight_[e] * val;
    }
  }

  /// Pixel indices touched by one ray.
  std::vector<std::uint32_t> footprint(std::size_t row) const {
    return {col_.begin() + static_cast<long>(row_ptr_[row]), col_.begin() + static_cast<long>(row_ptr_[row + 1])};
  }

 private:
  std::size_t n_ = 0, n_detectors_ = 0, n_views_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> weight_;
};

/// A linear map from volumes to some measurement field, with its adjoint.
template <class Op>
concept LinearOperator = requires(const Op& op, const Volume3D& v, const typename Op::range_type& s) {
  { op.apply(v) } -> std::same_as<typename Op::range_type>;
  { op.adjoint(s) } -> std::same_as<Volume3D>;
} && DenseField<typename Op::range_type>;

/// A = P T: per-axial-slice parallel-beam Radon transform restricted to the
/// selected views.
class ProjectionOperator {
 public:
  using range_type = Sinogram3D;

  ProjectionOperator(ProjectionGeometry geom, ViewSubsampling views, std::size_t n, std::size_t nz)
      : geom_(geom), views_(std::move(views)), n_(n), nz_(nz) {
    geom_.validate();
    views_.validate(geom_.n_angles_full);
    require(n > 0 && nz > 0, "ProjectionOperator: volume dimensions must be positive");
    projector_ = SliceProjector(n, geom_, views_.indices);
  }

  const ProjectionGeometry& geometry() const { return geom_; }
  const ViewSubsampling& views() const { return views_; }
  std::size_t side() const { return n_; }
  std::size_t nz() const { return nz_; }
  const SliceProjector& slice_projector() const { return projector_; }

  Sinogram3D apply(const Volume3D& v) const {
    require(v.nx() == n_ && v.ny() == n_ && v.nz() == nz_, "ProjectionOperator: volume shape mismatch");
    Sinogram3D s(views_.size(), geom_.n_detectors, nz_);
    const std::size_t rows = s.slice_size();
    for (std::size_t k = 0; k < nz_; ++k) projector_.forward(v.axial(k), s.values().subspan(k * rows, rows));
    return s;
  }

  Volume3D adjoint(const Sinogram3D& s) const {
    require(s.n_views() == views_.size() && s.n_detectors() == geom_.n_detectors && s.nz() == nz_,
            "ProjectionOperator: sinogram shape mismatch");
    Volume3D v(n_, n_, nz_);
    const std::size_t rows = s.slice_size();
    for (std::size_t k = 0; k < nz_; ++k)
      projector_.adjoint_accumulate(s.values().subspan(k * rows, rows), v.axial(k));
    return v;
  }

 private:
  ProjectionGeometry geom_;
  ViewSubsampling views_;
  std::size_t n_, nz_;
  SliceProjector projector_;
};

/// Identity measurement operator, useful for denoising-only problems.
struct IdentityOperator {
  using range_type = Volume3D;
  Volume3D apply(const Volume3D& v) const { return v; }
  Volume3D adjoint(const Volume3D& s) const { return s; }
};

inline Sinogram3D radon_forward(const Volume3D& v, const ProjectionGeometry& geom) {
  require(v.nx() == v.ny(), "radon_forward: axial slices must be square");
  return ProjectionOperator(geom, ViewSubsampling::all(geom.n_angles_full), v.nx(), v.nz()).apply(v);
}

inline Volume3D radon_adjoint(const Sinogram3D& s, const ProjectionGeometry& geom, std::size_t n) {
  require(s.n_views() == geom.n_angles_full && s.n_detectors() == geom.n_detectors,
          "radon_adjoint: sinogram does not conform to geometry");
  return ProjectionOperator(geom, ViewSubsampling::all(geom.n_angles_full), n, s.nz()).adjoint(s);
}

/// P: keep only the selected views of a full-view sinogram.
inline Sinogram3D subsample_views(const Sinogram3D& full, const ViewSubsampling& views) {
  views.validate(full.n_views());
  Sinogram3D out(views.size(), full.n_detectors(), full.nz());
  for (std::size_t k = 0; k < full.nz(); ++k)
    for (std::size_t v = 0; v < views.size(); ++v)
      for (std::size_t d = 0; d < full.n_detectors(); ++d) out(v, d, k) = full(views.indices[v], d, k);
  return out;
}

/// P^T: place selected views back into a zero full-view sinogram.
inline Sinogram3D expand_views(const Sinogram3D& sub, const ViewSubsampling& views, std::size_t n_full) {
  views.validate(n_full);
  require(sub.n_views() == views.size(), "expand_views: view count mismatch");
  Sinogram3D out(n_full, sub.n_detectors(), sub.nz());
  for (std::size_t k = 0; k < sub.nz(); ++k)
    for (std::size_t v = 0; v < views.size(); ++v)
      for (std::size_t d = 0; d < sub.n_detectors(); ++d) out(views.indices[v], d, k) = sub(v, d, k);
  return out;
}

/// Adds i.i.d. N(0, sigma^2) noise, drawn in storage order from Rng(seed).
template <DenseField F>
F add_gaussian_noise(const F& clean, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0 && std::isfinite(sigma), "add_gaussian_noise: sigma must be >= 0");
  F out = clean;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.values()) v += sigma * rng.normal();
  return out;
}

}  // namespace nerd
