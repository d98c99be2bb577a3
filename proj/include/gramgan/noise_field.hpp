#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gramgan/layers.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan {

/// n immutable R^3 grids of i.i.d. standard normal values, one per octave.
/// Grid storage is x-fastest: index = (z * R + y) * R + x.
class NoiseBank {
 public:
  NoiseBank(int octaves, int resolution, std::uint64_t seed);

  int octaves() const { return octaves_; }
  int resolution() const { return resolution_; }
  std::uint64_t seed() const { return seed_; }

  std::span<const Real> grid(int octave) const;
  Real at(int octave, int x, int y, int z) const;

 private:
  int octaves_;
  int resolution_;
  std::uint64_t seed_;
  std::vector<Real> values_;
};

/// One linear map per octave, applied to world coordinates before sampling.
struct FrequencyTransforms {
  std::vector<Mat3> matrices;

  int octaves() const { return static_cast<int>(matrices.size()); }

  static FrequencyTransforms identity(int n);
  static FrequencyTransforms zeros(int n);
  /// Geometric ladder T_i = 2^(-4i/n) (I + eps), eps ~ N(0, 0.01) per entry.
  /// With rng == nullptr the perturbation is omitted.
  static FrequencyTransforms ladder(int n, Rng* rng);

  /// Flat n*9 row-major view, the layout used for parameters.
  std::vector<Real> flatten() const;
  static FrequencyTransforms from_flat(std::span<const Real> flat);
};

/// Trilinear interpolation of a periodic R^3 grid at continuous grid
/// position p (lattice indices wrap modulo R).
Real trilinear_sample(std::span<const Real> grid, int resolution, Vec3 p);

/// Same, additionally returning d value / d p.
Real trilinear_sample_grad(std::span<const Real> grid, int resolution, Vec3 p,
                           Vec3& gradient);

/// World-to-grid multiplier: one world unit spans the whole grid.
inline Real world_to_grid(const NoiseBank& bank) { return static_cast<Real>(bank.resolution()); }

/// eta_i(c) = grid_i(R * T_i c) for every octave i.
std::vector<Real> eval_noise_vector(Vec3 c, const FrequencyTransforms& transforms,
                                    const NoiseBank& bank);

/// Batched form: out is row-major [coords.size() x n].
void eval_noise_batch(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                      const NoiseBank& bank, std::span<Real> out);

/// Accumulates d loss / d T (flat n*9) given d loss / d eta ([P x n]).
/// The noise grids themselves receive no gradient.
void eval_noise_backward(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                         const NoiseBank& bank, std::span<const Real> d_eta,
                         std::span<Real> d_transforms);

}  // namespace gramgan
