#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gramgan/model.hpp"

namespace gramgan {

/// The parameters fine-tuned for an unseen exemplar: frequency transforms,
/// per-layer modulation and the four noise injectors. z is kept for
/// reference only; it is never optimized.
struct AdaptableParams {
  std::vector<Real> z;
  FrequencyTransforms transforms;
  Modulation modulation;
  std::array<std::vector<Real>, kSamplerNoisyLayers> injectors;
};

struct AdaptSettings {
  int iterations = 500;
  double lr = 1e-3;
  /// Plain gradient descent instead of Adam.
  bool sgd = false;
  int batch_size = 4;
  std::uint64_t seed = 0;
  /// Fixed planes used to score theta before and after the run.
  int eval_slices = 8;
};

struct AdaptResult {
  AdaptableParams theta;
  /// L_style of every iteration's training batch, before its update.
  std::vector<double> style_trajectory;
  /// L_style on the fixed evaluation planes for the initial and final theta.
  double style_before = 0;
  double style_after = 0;
};

/// Initial guess from E, Q, f, g_l and the trained injectors.
AdaptableParams predict_theta(const Model& model, const Tensor& patch);

/// Minimizes L_style of slices rendered with theta against the exemplar
/// patch under the frozen critic. The model is not modified.
/// patch: [1 x 3 x P x P] in [0, 1], P = the model's patch size.
AdaptResult adapt(const Model& model, const Tensor& patch, const AdaptSettings& settings = {});

/// Same procedure with Gram features from another extractor.
AdaptResult adapt_with_extractor(const Model& model, const Tensor& patch,
                                 const FeatureExtractor& extractor,
                                 const AdaptSettings& settings = {});

/// L_style of slices rendered with theta on the given planes against real
/// features. When grad is set it receives d L_style / d theta (z untouched).
double theta_style(const Model& model, const AdaptableParams& theta,
                   const std::vector<SlicePlane>& planes, const FeatureExtractor& extractor,
                   const FeatureStack& real, AdaptableParams* grad = nullptr);

/// A model whose injectors were replaced by theta, plus the condition state
/// that drives it.
struct AdaptedTexture {
  Model model;
  ConditionState state;
};

AdaptedTexture apply_theta(const Model& model, const AdaptableParams& theta);

/// Delta file: theta plus the SHA-256 of the parent checkpoint.
void save_delta(const std::string& path, const AdaptableParams& theta,
                const std::string& parent_sha256);

struct Delta {
  std::string parent_sha256;
  AdaptableParams theta;
};

Delta load_delta(const std::string& path);

/// Loads a checkpoint and applies a delta to it. CheckpointError when the
/// delta was made for a different checkpoint.
AdaptedTexture load_adapted(const std::string& checkpoint_path, const std::string& delta_path);

}  // namespace gramgan
