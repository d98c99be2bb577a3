#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gramgan/layers.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan {

enum class SliceMode { Isotropic, Anisotropic };

/// Planar probe of the texture field: origin plus orthonormal basis (u, v).
struct SlicePlane {
  Vec3 origin;
  Vec3 u{1, 0, 0};
  Vec3 v{0, 1, 0};

  Vec3 normal() const { return cross(u, v); }
};

struct SliceSpec {
  int resolution = 128;
  Real pixel_spacing = Real(1) / 128;
  SliceMode mode = SliceMode::Isotropic;
  /// Grain axis for anisotropic slicing: 0 = x, 1 = y, 2 = z.
  int grain_axis = 2;

  void validate() const;
};

/// Isotropic: basis taken from a Haar-uniform rotation (normalized Gaussian
/// quaternion). Anisotropic: planes always contain the grain axis and rotate
/// about it by theta ~ U[0, 2pi). Origin uniform over one wrap period.
SlicePlane random_plane(SliceMode mode, Rng& rng, int grain_axis = 2);

/// Anisotropic plane at a fixed angle; theta = 0 with grain axis z gives
/// u = (1, 0, 0), v = (0, 0, 1).
SlicePlane anisotropic_plane(Real theta, int grain_axis = 2, Vec3 origin = {});

/// coord(i, j) = origin + (i - res/2) s u + (j - res/2) s v, row-major in i.
std::vector<Vec3> plane_to_coords(const SlicePlane& plane, const SliceSpec& spec);

/// Maps world coordinates to RGB rows ([count x 3]).
using TextureQuery = std::function<void(std::span<const Vec3>, std::span<Real>)>;

/// Returns a [1 x 3 x res x res] image, no filtering; pixel (i, j) is
/// stored at row i, column j.
Tensor render_slice(const SlicePlane& plane, const SliceSpec& spec, const TextureQuery& query);

}  // namespace gramgan
