#include "gramgan/slicer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gramgan {

void SliceSpec::validate() const {
  if (resolution < 1) throw std::invalid_argument("SliceSpec: resolution must be >= 1");
  if (!(pixel_spacing > 0)) throw std::invalid_argument("SliceSpec: spacing must be > 0");
  if (grain_axis < 0 || grain_axis > 2)
    throw std::invalid_argument("SliceSpec: grain axis must be 0, 1 or 2");
}

namespace {

Vec3 axis_vector(int axis) {
  return {Real(axis == 0), Real(axis == 1), Real(axis == 2)};
}

}  // namespace

SlicePlane anisotropic_plane(Real theta, int grain_axis, Vec3 origin) {
  if (grain_axis < 0 || grain_axis > 2)
    throw std::invalid_argument("anisotropic_plane: grain axis must be 0, 1 or 2");
  // (a, b) are the two axes orthogonal to the grain, in cyclic order after
  // it for x and y grains and (x, y) for a z grain.
  const int a = grain_axis == 2 ? 0 : (grain_axis + 1) % 3;
  const int b = grain_axis == 2 ? 1 : (grain_axis + 2) % 3;
  const Real c = std::cos(theta), s = std::sin(theta);
  SlicePlane p;
  p.origin = origin;
  p.u = c * axis_vector(a) + s * axis_vector(b);
  p.v = axis_vector(grain_axis);
  return p;
}

SlicePlane random_plane(SliceMode mode, Rng& rng, int grain_axis) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SlicePlane p;
  if (mode == SliceMode::Isotropic) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double q[4];
    double n2 = 0;
    do {
      n2 = 0;
      for (double& x : q) {
        x = gauss(rng);
        n2 += x * x;
      }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
    // First two columns of the rotation matrix of unit quaternion (w, x, y, z).
    p.u = {static_cast<Real>(1 - 2 * (y * y + z * z)), static_cast<Real>(2 * (x * y + w * z)),
           static_cast<Real>(2 * (x * z - w * y))};
    p.v = {static_cast<Real>(2 * (x * y - w * z)), static_cast<Real>(1 - 2 * (x * x + z * z)),
           static_cast<Real>(2 * (y * z + w * x))};
  } else {
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    p = anisotropic_plane(static_cast<Real>(theta), grain_axis);
  }
  p.origin = {static_cast<Real>(unit(rng)), static_cast<Real>(unit(rng)),
              static_cast<Real>(unit(rng))};
  return p;
}

std::vector<Vec3> plane_to_coords(const SlicePlane& plane, const SliceSpec& spec) {
  spec.validate();
  const int res = spec.resolution;
  std::vector<Vec3> coords(static_cast<std::size_t>(res) * res);
  const Real half = static_cast<Real>(res / 2);
  for (int i = 0; i < res; ++i) {
    const Real a = (static_cast<Real>(i) - half) * spec.pixel_spacing;
    for (int j = 0; j < res; ++j) {
      const Real b = (static_cast<Real>(j) - half) * spec.pixel_spacing;
      coords[static_cast<std::size_t>(i) * res + j] = plane.origin + a * plane.u + b * plane.v;
    }
  }
  return coords;
}

Tensor render_slice(const SlicePlane& plane, const SliceSpec& spec, const TextureQuery& query) {
  const auto coords = plane_to_coords(plane, spec);
  std::vector<Real> rgb(coords.size() * 3);
  query(coords, rgb);
  const int res = spec.resolution;
  Tensor image(1, 3, res, res);
  const std::size_t px = coords.size();
  for (std::size_t p = 0; p < px; ++p)
    for (int ch = 0; ch < 3; ++ch) image.data[ch * px + p] = rgb[p * 3 + ch];
  return image;
}

}  // namespace gramgan
