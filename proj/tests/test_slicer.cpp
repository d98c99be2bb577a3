#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>

#include "gramgan/slicer.hpp"

using namespace gramgan;

namespace {

void expect_orthonormal(const SlicePlane& p) {
  EXPECT_NEAR(norm(p.u), 1.0, 1e-6);
  EXPECT_NEAR(norm(p.v), 1.0, 1e-6);
  EXPECT_NEAR(dot(p.u, p.v), 0.0, 1e-6);
}

}  // namespace

TEST(Slicer, RandomPlanesAreOrthonormal) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    expect_orthonormal(random_plane(SliceMode::Isotropic, rng));
    expect_orthonormal(random_plane(SliceMode::Anisotropic, rng));
  }
}

TEST(Slicer, OriginInsideOneWrapPeriod) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const SlicePlane p = random_plane(SliceMode::Isotropic, rng);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(p.origin[k], 0);
      EXPECT_LT(p.origin[k], 1);
    }
  }
}

TEST(Slicer, AnisotropicPlaneAtZeroAngle) {
  const SlicePlane p = anisotropic_plane(0, 2);
  EXPECT_EQ(p.u, (Vec3{1, 0, 0}));
  EXPECT_EQ(p.v, (Vec3{0, 0, 1}));
}

TEST(Slicer, AnisotropicPlanesContainGrainAxis) {
  Rng rng(3);
  for (int axis = 0; axis < 3; ++axis)
    for (int i = 0; i < 200; ++i) {
      const SlicePlane p = random_plane(SliceMode::Anisotropic, rng, axis);
      // The grain direction lies in the plane, so the normal is orthogonal to it.
      EXPECT_NEAR(p.normal()[axis], 0.0, 1e-6);
    }
}

TEST(Slicer, IsotropicNormalsUniformOnSphere) {
  // 10 equal-area bands in z times 8 longitude sectors.
  Rng rng(4);
  const int draws = 10000, bands = 10, sectors = 8;
  std::vector<int> counts(bands * sectors, 0);
  for (int i = 0; i < draws; ++i) {
    const Vec3 n = random_plane(SliceMode::Isotropic, rng).normal();
    const int band = std::min(bands - 1, static_cast<int>((n.z + 1) / 2 * bands));
    const double phi = std::atan2(double(n.y), double(n.x)) + std::numbers::pi;
    const int sector = std::min(sectors - 1, static_cast<int>(phi / (2 * std::numbers::pi) * sectors));
    ++counts[band * sectors + sector];
  }
  const double expected = double(draws) / counts.size();
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01);
}

TEST(Slicer, SinglePixelIsOrigin) {
  SliceSpec spec;
  spec.resolution = 1;
  SlicePlane p;
  p.origin = {0.3f, 0.4f, 0.5f};
  const auto c = plane_to_coords(p, spec);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], p.origin);
}

TEST(Slicer, PointsLieOnPlaneAndSpanOneUnit) {
  Rng rng(5);
  SliceSpec spec;
  for (int trial = 0; trial < 20; ++trial) {
    const SlicePlane p = random_plane(SliceMode::Isotropic, rng);
    const auto coords = plane_to_coords(p, spec);
    ASSERT_EQ(coords.size(), 128u * 128u);
    const Vec3 n = p.normal();
    for (const Vec3& c : coords) ASSERT_NEAR(dot(c - p.origin, n), 0.0, 1e-6);
    // Extent of 128 samples at spacing 1/128 is one world unit (inclusive of
    // the missing last step).
    const Vec3 d = coords[127 * 128] - coords[0];
    EXPECT_NEAR(norm(d) + spec.pixel_spacing, 1.0, 1e-5);
  }
}

TEST(Slicer, ConstantQueryGivesConstantImage) {
  SliceSpec spec;
  spec.resolution = 8;
  const Tensor img = render_slice(SlicePlane{}, spec, [](std::span<const Vec3>, std::span<Real> out) {
    for (std::size_t i = 0; i < out.size(); i += 3) {
      out[i] = 0.1f;
      out[i + 1] = 0.2f;
      out[i + 2] = 0.3f;
    }
  });
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(img.at(0, 0, y, x), 0.1f);
      EXPECT_EQ(img.at(0, 2, y, x), 0.3f);
    }
}

TEST(Slicer, InvalidSpecThrows) {
  SliceSpec spec;
  spec.resolution = 0;
  EXPECT_THROW(plane_to_coords(SlicePlane{}, spec), std::invalid_argument);
  spec.resolution = 4;
  spec.pixel_spacing = 0;
  EXPECT_THROW(plane_to_coords(SlicePlane{}, spec), std::invalid_argument);
}
