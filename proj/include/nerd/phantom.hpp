#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nerd/error.hpp"
#include "nerd/volume.hpp"

namespace nerd {

/// Solid ellipsoid in normalized [-1, 1]^3 coordinates, rotated by `phi`
/// radians about the z axis, adding `intensity` to every voxel centre it
/// contains.
struct Ellipsoid {
  double cx, cy, cz;
  double ax, ay, az;
  double phi;
  double intensity;

  bool contains(double x, double y, double z) const {
    const double dx = x - cx, dy = y - cy, dz = z - cz;
    const double c = std::cos(phi), s = std::sin(phi);
    const double xr = c * dx + s * dy;
    const double yr = -s * dx + c * dy;
    const double q = (xr / ax) * (xr / ax) + (yr / ay) * (yr / ay) + (dz / az) * (dz / az);
    return q <= 1.0;
  }
};

struct PhantomSpec {
  std::vector<Ellipsoid> ellipsoids;
};

/// Ten-ellipsoid 3D Shepp-Logan with the high-contrast ("modified")
/// intensities, restricted to rotations about z.
inline PhantomSpec shepp_logan_spec() {
  constexpr double deg = std::numbers::pi / 180.0;
  return {{
      {0.0, 0.0, 0.0, 0.6900, 0.920, 0.810, 0.0, 1.0},
      {0.0, -0.0184, 0.0, 0.6624, 0.874, 0.780, 0.0, -0.8},
      {0.22, 0.0, 0.0, 0.1100, 0.310, 0.220, -18.0 * deg, -0.2},
      {-0.22, 0.0, 0.0, 0.1600, 0.410, 0.280, 18.0 * deg, -0.2},
      {0.0, 0.35, -0.15, 0.2100, 0.250, 0.410, 0.0, 0.1},
      {0.0, 0.1, 0.25, 0.0460, 0.046, 0.050, 0.0, 0.1},
      {0.0, -0.1, 0.25, 0.0460, 0.046, 0.050, 0.0, 0.1},
      {-0.08, -0.605, 0.0, 0.0460, 0.023, 0.050, 0.0, 0.1},
      {0.0, -0.606, 0.0, 0.0230, 0.023, 0.020, 0.0, 0.1},
      {0.06, -0.605, 0.0, 0.0230, 0.046, 0.020, 0.0, 0.1},
  }};
}

/// Normalized coordinate of voxel centre `i` on an axis of `n` voxels.
/// Written as an integer numerator so that mirrored voxels get exactly
/// negated coordinates.
inline double voxel_coordinate(std::size_t i, std::size_t n) {
  return static_cast<double>(static_cast<long>(2 * i + 1) - static_cast<long>(n)) / static_cast<double>(n);
}

/// Sums ellipsoid intensities at voxel centres and clips to [0, 1].
inline Volume3D render_phantom(const PhantomSpec& spec, std::size_t nx, std::size_t ny, std::size_t nz) {
  require(!spec.ellipsoids.empty(), "render_phantom: at least one ellipsoid required");
  Volume3D v(nx, ny, nz);
  for (std::size_t k = 0; k < nz; ++k) {
    const double z = voxel_coordinate(k, nz);
    for (std::size_t j = 0; j < ny; ++j) {
      const double y = voxel_coordinate(j, ny);
      for (std::size_t i = 0; i < nx; ++i) {
        const double x = voxel_coordinate(i, nx);
        double acc = 0.0;
        for (const auto& e : spec.ellipsoids)
          if (e.contains(x, y, z)) acc += e.intensity;
        v(i, j, k) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return v;
}

inline Volume3D shepp_logan_3d(std::size_t nx, std::size_t ny, std::size_t nz) {
  require(nx >= 8 && ny >= 8 && nz >= 8, "shepp_logan_3d: dimensions must be >= 8");
  return render_phantom(shepp_logan_spec(), nx, ny, nz);
}

}  // namespace nerd
