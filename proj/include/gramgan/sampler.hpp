#pragma once

#include <array>
#include <span>
#include <vector>

#include "gramgan/layers.hpp"
#include "gramgan/noise_field.hpp"
#include "gramgan/param.hpp"

namespace gramgan {

inline constexpr int kSamplerHiddenLayers = 5;
inline constexpr int kSamplerNoisyLayers = 4;

/// Per-hidden-layer scale (gamma) and shift (delta), each of sampler width.
struct Modulation {
  std::array<std::vector<Real>, kSamplerHiddenLayers> gamma;
  std::array<std::vector<Real>, kSamplerHiddenLayers> delta;

  static Modulation identity(int width);
};

/// Post-modulation activations of every hidden layer, [rows x width] each.
struct SamplerTrace {
  std::array<std::vector<Real>, kSamplerHiddenLayers> activations;
};

/// Point-operation texture MLP. A learned constant feeds five hidden layers
/// of equal width; hidden layer l < 4 additionally receives the l-th
/// contiguous bin of n/4 noise values through its injection matrix A_l.
class Sampler {
 public:
  Sampler() = default;
  Sampler(int octaves, int width, Rng& rng);

  int octaves() const { return octaves_; }
  int width() const { return width_; }
  int bin_size() const { return octaves_ / kSamplerNoisyLayers; }

  Rgb forward(std::span<const Real> noise, const Modulation* modulation = nullptr) const;

  /// noise is row-major [rows x n]; rgb receives [rows x 3].
  void forward_batch(std::span<const Real> noise, int rows, const Modulation* modulation,
                     std::span<Real> rgb, SamplerTrace* trace = nullptr) const;

  /// Gradients of sum(d_rgb . rgb). Parameter gradients accumulate into
  /// grad fields; d_noise ([rows x n]) and the modulation gradient are
  /// overwritten / accumulated respectively when provided.
  void backward_batch(std::span<const Real> noise, int rows, const Modulation* modulation,
                      std::span<const Real> d_rgb, std::span<Real> d_noise,
                      Modulation* d_modulation);

  ParamList params();
  ConstParamList params() const;
  /// Injection matrices only (A_0..A_3).
  ParamList injectors();

  Param constant;
  std::array<Param, kSamplerHiddenLayers> weights;
  std::array<Param, kSamplerHiddenLayers> biases;
  std::array<Param, kSamplerNoisyLayers> injection;
  Param out_weight;
  Param out_bias;

 private:
  struct Workspace;
  void run_forward(std::span<const Real> noise, int rows, const Modulation* modulation,
                   Workspace& ws) const;
  void check_inputs(std::span<const Real> noise, int rows, const Modulation* modulation) const;

  int octaves_ = 0;
  int width_ = 0;
  Real w_scale_ = 1;
  Real a_scale_ = 1;
};

/// Single public texture query: noise lookup followed by the sampler.
/// rgb receives [coords.size() x 3].
void evaluate_texture(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                      const NoiseBank& bank, const Sampler& sampler,
                      const Modulation* modulation, std::span<Real> rgb);

std::vector<Rgb> evaluate_texture(std::span<const Vec3> coords,
                                  const FrequencyTransforms& transforms, const NoiseBank& bank,
                                  const Sampler& sampler, const Modulation* modulation = nullptr);

}  // namespace gramgan
