#pragma once

#include <array>
#include <utility>
#include <vector>

#include "gramgan/conv_stack.hpp"
#include "gramgan/layers.hpp"
#include "gramgan/noise_field.hpp"
#include "gramgan/sampler.hpp"

namespace gramgan {

inline constexpr int kLatentDim = 32;
inline constexpr int kMappingWidth = 128;

/// Everything the conditional sampler needs for one exemplar patch.
struct ConditionState {
  std::vector<Real> z;  // latent code
  std::vector<Real> w;  // style vector
  FrequencyTransforms transforms;
  Modulation modulation;
};

struct ConditioningShape {
  int octaves = 32;
  int sampler_width = 128;
  int patch_size = 128;
  int latent_dim = kLatentDim;
  int encoder_width_divisor = 1;
};

/// Encoder E, transform mapping Q, style network f and per-layer affine heads
/// g_l of the conditional model.
class ConditioningNets {
 public:
  /// Intermediates of a batched forward pass, kept for backward().
  struct Tape {
    ConvStack::Tape encoder;
    std::vector<Real> z;
    std::vector<Real> q_pre;
    std::vector<Real> q_act;
    std::vector<Real> f_pre;
    std::vector<Real> f_act;
    std::vector<Real> w;
    int batch = 0;
  };

  /// Gradients flowing back from the sampler for a batch of states.
  struct StateGrads {
    std::vector<Real> transforms;  // [batch x 9n]
    std::vector<Modulation> modulation;
  };

  ConditioningNets() = default;
  ConditioningNets(const ConditioningShape& shape, Rng& rng);

  const ConditioningShape& shape() const { return shape_; }

  /// patch: [batch x 3 x P x P], values in [0, 1]. Returns [batch x latent].
  std::vector<Real> encode(const Tensor& patch, ConvStack::Tape* tape = nullptr) const;
  FrequencyTransforms map_transforms(std::span<const Real> z) const;
  std::vector<Real> style(std::span<const Real> z) const;
  std::pair<std::vector<Real>, std::vector<Real>> layer_affine(std::span<const Real> w,
                                                              int layer) const;

  /// State from a latent code (Q, f, g_l).
  ConditionState state_from_latent(std::span<const Real> z) const;
  /// Full conditioning pass for a single patch.
  ConditionState condition(const Tensor& patch) const;

  /// Batched conditioning with a tape for training.
  std::vector<ConditionState> forward(const Tensor& patches, Tape& tape) const;
  /// Accumulates parameter gradients of every conditioning network.
  void backward(const Tape& tape, const StateGrads& grads);

  ParamList params();
  ConstParamList params() const;

  ConvStack encoder;
  Dense q_hidden;
  Dense q_out;
  Dense f_hidden;
  Dense f_out;
  std::array<Dense, kSamplerHiddenLayers> affine;

 private:
  void check_latent(std::span<const Real> z, int rows) const;
  ConditionState assemble(std::span<const Real> q_out_row, std::span<const Real> w_row) const;

  ConditioningShape shape_;
};

/// Maps [0, 1] pixel values to the [-1, 1] range seen by E and D.
Tensor normalize_patch(const Tensor& patch);

}  // namespace gramgan
