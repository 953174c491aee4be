#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nerd/error.hpp"

namespace nerd {

/// Dense real-valued 3D grid. Voxel (i, j, k) lives at i + nx*(j + ny*k):
/// x is the fastest axis and z the slowest, so every axial slice is one
/// contiguous nx*ny block.
class Volume3D {
 public:
  Volume3D() = default;

  Volume3D(std::size_t nx, std::size_t ny, std::size_t nz, double fill = 0.0)
      : nx_(nx), ny_(ny), nz_(nz) {
    require(nx > 0 && ny > 0 && nz > 0, "Volume3D: dimensions must be positive");
    data_.assign(nx * ny * nz, fill);
  }

  Volume3D(std::size_t nx, std::size_t ny, std::size_t nz, std::vector<double> data)
      : nx_(nx), ny_(ny), nz_(nz), data_(std::move(data)) {
    require(nx > 0 && ny > 0 && nz > 0, "Volume3D: dimensions must be positive");
    require(data_.size() == nx * ny * nz, "Volume3D: data length does not match nx*ny*nz");
    require(all_finite(data_), "Volume3D: non-finite voxel value");
  }

  static Volume3D zeros_like(const Volume3D& other) {
    return Volume3D(other.nx_, other.ny_, other.nz_);
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return nx_ * ny_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + nx_ * (j + ny_ * k);
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[index(i, j, k)];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::span<double> axial(std::size_t k) { return values().subspan(k * slice_size(), slice_size()); }
  std::span<const double> axial(std::size_t k) const {
    return values().subspan(k * slice_size(), slice_size());
  }

  bool same_shape(const Volume3D& o) const { return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_; }

  bool is_finite() const { return all_finite(data_); }

  void check_finite(const std::string& where) const {
    if (!is_finite()) throw NumericError(where + ": volume contains non-finite values");
  }

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  std::size_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<double> data_;
};

/// 2D real grid, row-major with `width` as the fast axis.
struct Slice2D {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Slice2D() = default;
  Slice2D(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h, fill) {}

  double& operator()(std::size_t x, std::size_t y) { return data[x + width * y]; }
  double operator()(std::size_t x, std::size_t y) const { return data[x + width * y]; }
  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }
  bool same_shape(const Slice2D& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const Slice2D&, const Slice2D&) = default;
};

enum class Axis { axial, coronal, sagittal };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::axial: return "axial";
    case Axis::coronal: return "coronal";
    case Axis::sagittal: return "sagittal";
  }
  return "?";
}

/// Number of slices of `v` perpendicular to `axis`.
inline std::size_t slice_count(const Volume3D& v, Axis axis) {
  switch (axis) {
    case Axis::axial: return v.nz();
    case Axis::coronal: return v.ny();
    case Axis::sagittal: return v.nx();
  }
  return 0;
}

/// Axial slices are (x, y) grids, coronal (x, z), sagittal (y, z).
inline Slice2D extract_slice(const Volume3D& v, Axis axis, std::size_t index) {
  require(index < slice_count(v, axis), "extract_slice: index out of range");
  Slice2D s;
  switch (axis) {
    case Axis::axial: {
      s = Slice2D(v.nx(), v.ny());
      auto src = v.axial(index);
      std::copy(src.begin(), src.end(), s.data.begin());
      break;
    }
    case Axis::coronal:
      s = Slice2D(v.nx(), v.nz());
      for (std::size_t k = 0; k < v.nz(); ++k)
        for (std::size_t i = 0; i < v.nx(); ++i) s(i, k) = v(i, index, k);
      break;
    case Axis::sagittal:
      s = Slice2D(v.ny(), v.nz());
      for (std::size_t k = 0; k < v.nz(); ++k)
        for (std::size_t j = 0; j < v.ny(); ++j) s(j, k) = v(index, j, k);
      break;
  }
  return s;
}

inline void insert_slice(Volume3D& v, Axis axis, std::size_t index, const Slice2D& s) {
  require(index < slice_count(v, axis), "insert_slice: index out of range");
  switch (axis) {
    case Axis::axial:
      require(s.width == v.nx() && s.height == v.ny(), "insert_slice: shape mismatch");
      std::copy(s.data.begin(), s.data.end(), v.axial(index).begin());
      break;
    case Axis::coronal:
      require(s.width == v.nx() && s.height == v.nz(), "insert_slice: shape mismatch");
      for (std::size_t k = 0; k < v.nz(); ++k)
        for (std::size_t i = 0; i < v.nx(); ++i) v(i, index, k) = s(i, k);
      break;
    case Axis::sagittal:
      require(s.width == v.ny() && s.height == v.nz(), "insert_slice: shape mismatch");
      for (std::size_t k = 0; k < v.nz(); ++k)
        for (std::size_t j = 0; j < v.ny(); ++j) v(index, j, k) = s(j, k);
      break;
  }
}

// ---------------------------------------------------------------------------
// Vector-space arithmetic over any dense field (volumes, sinograms, slices).

template <class F>
concept DenseField = requires(F& f, const F& cf) {
  { f.values() } -> std::convertible_to<std::span<double>>;
  { cf.values() } -> std::convertible_to<std::span<const double>>;
  { cf.same_shape(cf) } -> std::convertible_to<bool>;
};

template <DenseField F>
void require_same_shape(const F& a, const F& b, const char* op) {
  require(a.same_shape(b), std::string(op) + ": dimension mismatch");
}

template <DenseField F>
double dot(const F& a, const F& b) {
  require_same_shape(a, b, "dot");
  auto x = a.values();
  auto y = b.values();
  double s = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) s += x[n] * y[n];
  return s;
}

template <DenseField F>
double l2_norm_sq(const F& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

template <DenseField F>
double l2_norm(const F& a) {
  return std::sqrt(l2_norm_sq(a));
}

template <DenseField F>
double l1_norm(const F& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  return s;
}

template <DenseField F>
double linf_norm(const F& a) {
  double s = 0.0;
  for (double v : a.values()) s = std::max(s, std::abs(v));
  return s;
}

/// b <- alpha*a + b
template <DenseField F>
void axpy_inplace(double alpha, const F& a, F& b) {
  require_same_shape(a, b, "axpy");
  auto x = a.values();
  auto y = b.values();
  for (std::size_t n = 0; n < x.size(); ++n) y[n] += alpha * x[n];
}

/// Returns alpha*a + b.
template <DenseField F>
F axpy(double alpha, const F& a, const F& b) {
  F out = b;
  axpy_inplace(alpha, a, out);
  return out;
}

template <DenseField F>
void scale_inplace(double alpha, F& a) {
  for (double& v : a.values()) v *= alpha;
}

template <DenseField F>
F scale(double alpha, const F& a) {
  F out = a;
  scale_inplace(alpha, out);
  return out;
}

/// Returns a - b.
template <DenseField F>
F subtract(const F& a, const F& b) {
  return axpy(-1.0, b, a);
}

/// Returns alpha*a + beta*b.
template <DenseField F>
F linear_combination(double alpha, const F& a, double beta, const F& b) {
  require_same_shape(a, b, "linear_combination");
  F out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t n = 0; n < o.size(); ++n) o[n] = alpha * o[n] + beta * y[n];
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences along z with a Neumann boundary: the last difference is 0.

inline Volume3D dz_forward(const Volume3D& v) {
  Volume3D out = Volume3D::zeros_like(v);
  const std::size_t plane = v.slice_size();
  auto in = v.values();
  auto o = out.values();
  for (std::size_t k = 0; k + 1 < v.nz(); ++k) {
    const std::size_t base = k * plane;
    for (std::size_t p = 0; p < plane; ++p) o[base + p] = in[base + plane + p] - in[base + p];
  }
  return out;
}

inline Volume3D dz_adjoint(const Volume3D& g) {
  Volume3D out = Volume3D::zeros_like(g);
  const std::size_t plane = g.slice_size();
  const std::size_t nz = g.nz();
  auto in = g.values();
  auto o = out.values();
  for (std::size_t k = 0; k < nz; ++k) {
    const std::size_t base = k * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      if (k >= 1) acc += in[base - plane + p];
      if (k + 1 < nz) acc -= in[base + p];
      o[base + p] = acc;
    }
  }
  return out;
}

/// ||D_z v||_1
inline double tv_z(const Volume3D& v) {
  double s = 0.0;
  const std::size_t plane = v.slice_size();
  auto in = v.values();
  for (std::size_t k = 0; k + 1 < v.nz(); ++k)
    for (std::size_t p = 0; p < plane; ++p)
      s += std::abs(in[(k + 1) * plane + p] - in[k * plane + p]);
  return s;
}

}  // namespace nerd
