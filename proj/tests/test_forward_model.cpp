#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "nerd/forward_model.hpp"
#include "oracles/dense.hpp"
#include "oracles/ray_projector.hpp"
#include "test_support.hpp"

using namespace nerd;
using testing_support::random_sinogram;
using testing_support::random_volume;

namespace {

Volume3D gaussian_blob(std::size_t n, double width) {
  Volume3D v(n, n, 1);
  const double c = 0.5 * static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) - c, y = static_cast<double>(j) - c;
      v(i, j, 0) = std::exp(-(x * x + y * y) / (2.0 * width * width));
    }
  return v;
}

double angular_spread(std::size_t n, double width) {
  const auto g = ProjectionGeometry::standard(n);
  const Sinogram3D s = radon_forward(gaussian_blob(n, width), g);
  double spread = 0.0, peak = 0.0;
  for (std::size_t d = 0; d < g.n_detectors; ++d) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t a = 0; a < g.n_angles_full; ++a) {
      lo = std::min(lo, s(a, d, 0));
      hi = std::max(hi, s(a, d, 0));
    }
    spread = std::max(spread, hi - lo);
    peak = std::max(peak, hi);
  }
  return spread / peak;
}

}  // namespace

TEST(Geometry, StandardDefaults) {
  const auto g = ProjectionGeometry::standard(64);
  EXPECT_EQ(g.n_angles_full, 180u);
  EXPECT_EQ(g.n_detectors, 91u);
  EXPECT_EQ(g.detector_spacing, 1.0);
  EXPECT_EQ(g.angle(0), 0.0);
  EXPECT_NEAR(g.angle(90), std::numbers::pi / 2, 1e-15);
  EXPECT_LT(g.angle(179), std::numbers::pi);
  EXPECT_EQ(g.detector_offset(45), 0.0);
}

TEST(Geometry, ValidationRejectsDegenerateSettings) {
  EXPECT_THROW((ProjectionGeometry{0, 4, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ProjectionGeometry{4, 0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ProjectionGeometry{4, 4, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ProjectionGeometry{4, 4, -1.0}.validate()), std::invalid_argument);
}

TEST(Views, UniformEightOf180) {
  const auto v = ViewSubsampling::uniform(180, 8);
  EXPECT_EQ(v.indices, (std::vector<std::size_t>{0, 22, 45, 67, 90, 112, 135, 157}));
  EXPECT_NO_THROW(v.validate(180));
}

TEST(Views, InvalidSelectionsRejected) {
  EXPECT_THROW(ViewSubsampling::uniform(10, 0), std::invalid_argument);
  EXPECT_THROW(ViewSubsampling::uniform(10, 11), std::invalid_argument);
  EXPECT_THROW(ViewSubsampling{}.validate(10), std::invalid_argument);
  EXPECT_THROW((ViewSubsampling{{1, 1}}.validate(10)), std::invalid_argument);
  EXPECT_THROW((ViewSubsampling{{3, 2}}.validate(10)), std::invalid_argument);
  EXPECT_THROW((ViewSubsampling{{10}}.validate(10)), std::invalid_argument);
}

TEST(Sinogram3D, LayoutAndValidation) {
  Sinogram3D s(3, 4, 2);
  EXPECT_EQ(s.index(1, 2, 1), 2u + 4u * (1u + 3u * 1u));
  EXPECT_THROW(Sinogram3D(0, 4, 2), std::invalid_argument);
  EXPECT_THROW(Sinogram3D(3, 4, 2, std::vector<double>(5)), std::invalid_argument);
  std::vector<double> bad(24, 0.0);
  bad[0] = NAN;
  EXPECT_THROW(Sinogram3D(3, 4, 2, bad), std::invalid_argument);
}

TEST(RadonForward, ZeroVolumeGivesZeroSinogram) {
  const auto g = ProjectionGeometry::standard(16);
  const Sinogram3D s = radon_forward(Volume3D(16, 16, 2), g);
  EXPECT_EQ(l1_norm(s), 0.0);
  EXPECT_EQ(s.n_views(), 180u);
  EXPECT_EQ(s.n_detectors(), g.n_detectors);
}

TEST(RadonForward, CentralChordOfDiskIsDiameter) {
  const std::size_t n = 64;
  const double r = 20.0;
  Volume3D v(n, n, 1);
  const double c = 0.5 * static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) - c, y = static_cast<double>(j) - c;
      v(i, j, 0) = x * x + y * y <= r * r ? 1.0 : 0.0;
    }
  const auto g = ProjectionGeometry::standard(n);
  const Sinogram3D s = radon_forward(v, g);
  const std::size_t centre = (g.n_detectors - 1) / 2;
  ASSERT_EQ(g.detector_offset(centre), 0.0);
  for (std::size_t a = 0; a < g.n_angles_full; ++a) EXPECT_NEAR(s(a, centre, 0), 2.0 * r, 1.0) << "angle " << a;
}

TEST(RadonForward, ConstantImageAtZeroAngleIntegratesToSide) {
  const std::size_t n = 16;
  const auto g = ProjectionGeometry::standard(n);
  const Sinogram3D s = radon_forward(Volume3D(n, n, 1, 1.0), g);
  // Rays at angle 0 run along y; interior rays see the full column of n pixels.
  const std::size_t centre = (g.n_detectors - 1) / 2;
  EXPECT_NEAR(s(0, centre, 0), static_cast<double>(n), 1e-12);
}

TEST(RadonForward, MatchesDenseOperatorOn16x16x2With12Angles) {
  const ProjectionGeometry g{12, 23, 1.0};
  const Volume3D shape(16, 16, 2);
  const auto T = oracle::materialize([&](const Volume3D& e) { return radon_forward(e, g); }, shape);
  const Volume3D v = random_volume(16, 16, 2, 21);
  const auto dense = T.multiply(std::vector<double>(v.values().begin(), v.values().end()));
  const Sinogram3D fast = radon_forward(v, g);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < dense.size(); ++n) {
    num += (fast.values()[n] - dense[n]) * (fast.values()[n] - dense[n]);
    den += dense[n] * dense[n];
  }
  EXPECT_LE(std::sqrt(num / den), 1e-12);
}

TEST(RadonForward, MatchesStraightforwardRayMarcher) {
  const ProjectionGeometry g{12, 23, 1.0};
  const Volume3D v = random_volume(16, 16, 2, 22);
  const Sinogram3D s = radon_forward(v, g);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> img(v.axial(k).begin(), v.axial(k).end());
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t d = 0; d < 23; ++d)
        ASSERT_NEAR(s(a, d, k), oracle::ray_sum(img, 16, g.angle(a), g.detector_offset(d)), 1e-12);
  }
}

TEST(RadonForward, RejectsNonSquareSlices) {
  EXPECT_THROW(radon_forward(Volume3D(8, 9, 2), ProjectionGeometry::standard(8)), std::invalid_argument);
}

TEST(RadonForward, Linearity) {
  const auto g = ProjectionGeometry::standard(16);
  const Volume3D a = random_volume(16, 16, 3, 1), b = random_volume(16, 16, 3, 2);
  const double alpha = -1.7;
  const Sinogram3D lhs = radon_forward(axpy(alpha, a, b), g);
  const Sinogram3D rhs = axpy(alpha, radon_forward(a, g), radon_forward(b, g));
  EXPECT_LE(l2_norm(subtract(lhs, rhs)), 1e-12 * l2_norm(rhs));
}

TEST(RadonForward, RotationConsistencyForRadialObject) {
  const double coarse = angular_spread(96, 8.0);
  const double fine = angular_spread(96, 12.0);
  EXPECT_LE(coarse, 2.5e-3);
  // Bilinear interpolation error is second order in (pixel / width).
  EXPECT_NEAR(fine / coarse, (8.0 / 12.0) * (8.0 / 12.0), 0.1);
}

TEST(RadonAdjoint, ZeroSinogramGivesZeroVolume) {
  const auto g = ProjectionGeometry::standard(8);
  EXPECT_EQ(l1_norm(radon_adjoint(Sinogram3D(180, g.n_detectors, 2), g, 8)), 0.0);
}

TEST(RadonAdjoint, DotProductTestRandomPairs) {
  const auto g = ProjectionGeometry::standard(16);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Volume3D v = random_volume(16, 16, 2, 100 + s);
    const Sinogram3D y = random_sinogram(180, g.n_detectors, 2, 200 + s);
    const double lhs = dot(radon_forward(v, g), y), rhs = dot(v, radon_adjoint(y, g, 16));
    EXPECT_LE(std::fabs(lhs - rhs), 1e-10 * std::fabs(lhs));
  }
}

TEST(RadonAdjoint, SingleEntrySupportIsTheRayFootprint) {
  const ProjectionGeometry g{12, 23, 1.0};
  ProjectionOperator op(g, ViewSubsampling::all(12), 16, 1);
  Sinogram3D y(12, 23, 1);
  const std::size_t view = 5, det = 9;
  y(view, det, 0) = 1.0;
  const Volume3D back = op.adjoint(y);
  const auto fp = op.slice_projector().footprint(view * 23 + det);
  const std::set<std::uint32_t> support(fp.begin(), fp.end());
  ASSERT_FALSE(support.empty());
  for (std::size_t p = 0; p < back.size(); ++p) {
    if (support.count(static_cast<std::uint32_t>(p)))
      EXPECT_GT(back.values()[p], 0.0);
    else
      EXPECT_EQ(back.values()[p], 0.0);
  }
}

TEST(RadonAdjoint, ShapeMismatchRejected) {
  const auto g = ProjectionGeometry::standard(8);
  EXPECT_THROW(radon_adjoint(Sinogram3D(179, g.n_detectors, 1), g, 8), std::invalid_argument);
  ProjectionOperator op(g, ViewSubsampling::uniform(180, 8), 8, 2);
  EXPECT_THROW(op.adjoint(Sinogram3D(8, g.n_detectors, 3)), std::invalid_argument);
  EXPECT_THROW(op.apply(Volume3D(8, 8, 3)), std::invalid_argument);
}

TEST(ProjectionOperator, AllViewsEqualsRadonForward) {
  const auto g = ProjectionGeometry::standard(12);
  ProjectionOperator op(g, ViewSubsampling::all(180), 12, 2);
  const Volume3D v = random_volume(12, 12, 2, 3);
  EXPECT_EQ(op.apply(v), radon_forward(v, g));
}

TEST(ProjectionOperator, ComposesSubsamplingWithRadon) {
  const auto g = ProjectionGeometry::standard(12);
  const auto views = ViewSubsampling::uniform(180, 8);
  ProjectionOperator op(g, views, 12, 2);
  const Volume3D v = random_volume(12, 12, 2, 4);
  const Sinogram3D y = op.apply(v);
  EXPECT_EQ(y.n_views(), 8u);
  EXPECT_EQ(y, subsample_views(radon_forward(v, g), views));
  const Sinogram3D s = random_sinogram(8, g.n_detectors, 2, 5);
  const Volume3D back = op.adjoint(s);
  const Volume3D ref = radon_adjoint(expand_views(s, views, 180), g, 12);
  EXPECT_LE(l2_norm(subtract(back, ref)), 1e-12 * l2_norm(ref));
}

TEST(ProjectionOperator, AdjointIdentityEightViews) {
  const auto g = ProjectionGeometry::standard(16);
  ProjectionOperator op(g, ViewSubsampling::uniform(180, 8), 16, 4);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Volume3D v = random_volume(16, 16, 4, 300 + s);
    const Sinogram3D y = random_sinogram(8, g.n_detectors, 4, 400 + s);
    const Sinogram3D av = op.apply(v);
    EXPECT_LE(std::fabs(dot(av, y) - dot(v, op.adjoint(y))), 1e-10 * l2_norm(av) * l2_norm(y));
  }
}

TEST(ProjectionOperator, PerViewSubsamplingAndExpansionAreAdjoint) {
  const auto views = ViewSubsampling::uniform(30, 7);
  const Sinogram3D full = random_sinogram(30, 5, 2, 1);
  const Sinogram3D sub = random_sinogram(7, 5, 2, 2);
  EXPECT_NEAR(dot(subsample_views(full, views), sub), dot(full, expand_views(sub, views, 30)), 1e-12);
}

TEST(Noise, ZeroSigmaIsBitIdentical) {
  const Sinogram3D s = random_sinogram(4, 5, 3, 9);
  EXPECT_EQ(add_gaussian_noise(s, 0.0, 123), s);
}

TEST(Noise, VarianceMatchesOnAMillionSamples) {
  const Sinogram3D zero(1000, 1000, 1);
  const Sinogram3D y = add_gaussian_noise(zero, 0.1, 0);
  double mean = 0.0;
  for (double v : y.values()) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  EXPECT_NEAR(var, 0.01, 0.01 * 0.01);
  EXPECT_NEAR(mean, 0.0, 5e-4);
}

TEST(Noise, SeedDeterminism) {
  const Sinogram3D s = random_sinogram(4, 5, 3, 9);
  EXPECT_EQ(add_gaussian_noise(s, 0.1, 42), add_gaussian_noise(s, 0.1, 42));
  EXPECT_NE(add_gaussian_noise(s, 0.1, 42), add_gaussian_noise(s, 0.1, 43));
}

TEST(Noise, NegativeSigmaRejected) {
  EXPECT_THROW(add_gaussian_noise(Sinogram3D(1, 1, 1), -0.1, 0), std::invalid_argument);
}

TEST(Rng, FixedStreamAndUniformRange) {
  Rng a(5), b(5);
  for (int n = 0; n < 100; ++n) ASSERT_EQ(a.next(), b.next());
  Rng r(1);
  for (int n = 0; n < 10000; ++n) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Rng, SplitmixReferenceValue) {
  // First output of splitmix64 seeded with 0 (published test vector).
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
}
