#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nerd/volume.hpp"

namespace oracle {

/// Column-major dense matrix of a linear map, built by applying it to every
/// standard basis vector of the domain.
struct DenseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;  // data[c * rows + r]

  double operator()(std::size_t r, std::size_t c) const { return data[c * rows + r]; }

  std::vector<double> multiply(const std::vector<double>& x) const {
    std::vector<double> y(rows, 0.0);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) y[r] += data[c * rows + r] * x[c];
    return y;
  }

  std::vector<double> multiply_transpose(const std::vector<double>& y) const {
    std::vector<double> x(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) x[c] += data[c * rows + r] * y[r];
    return x;
  }
};

template <class Apply>
DenseMatrix materialize(Apply&& apply, const nerd::Volume3D& shape) {
  DenseMatrix m;
  m.cols = shape.size();
  nerd::Volume3D e = nerd::Volume3D::zeros_like(shape);
  for (std::size_t c = 0; c < m.cols; ++c) {
    e.values()[c] = 1.0;
    const auto col = apply(e);
    if (c == 0) {
      m.rows = col.values().size();
      m.data.assign(m.rows * m.cols, 0.0);
    }
    for (std::size_t r = 0; r < m.rows; ++r) m.data[c * m.rows + r] = col.values()[r];
    e.values()[c] = 0.0;
  }
  return m;
}

/// Largest eigenvalue of M^T M by power iteration.
inline double squared_spectral_norm(const DenseMatrix& m, int iterations = 2000) {
  std::vector<double> x(m.cols, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    auto y = m.multiply_transpose(m.multiply(x));
    double norm = 0.0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    lambda = norm;
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = y[n] / norm;
  }
  return lambda;
}

}  // namespace oracle
