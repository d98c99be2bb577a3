#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gramgan/conditioning.hpp"
#include "gramgan/config.hpp"
#include "gramgan/conv_stack.hpp"
#include "gramgan/noise_field.hpp"
#include "gramgan/param.hpp"
#include "gramgan/sampler.hpp"
#include "gramgan/slicer.hpp"

namespace gramgan {

/// Complete trainable state: noise bank, sampler, the single-mode transform
/// parameters or the conditioning networks, the critic, and both optimizers.
class Model {
 public:
  /// Builds a freshly initialized model. All randomness derives from
  /// config.seed; the noise bank uses config.noise_seed.
  explicit Model(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  bool conditional() const { return config_.mode == TrainMode::Conditional; }

  /// Trainable transforms of a single-exemplar model. ModeError otherwise.
  FrequencyTransforms transforms() const;

  /// Generator-side parameters: sampler plus transforms (single mode) or
  /// the conditioning networks (conditional mode).
  ParamList generator_params();
  ParamList critic_params();
  /// Every parameter record in checkpoint order.
  ParamList all_params();
  ConstParamList all_params() const;

  /// Texture query bound to this model. Conditional models need a state.
  TextureQuery texture(const ConditionState* state = nullptr) const;
  /// Renders one slice ([1 x 3 x res x res], unclamped).
  Tensor render(const SlicePlane& plane, const SliceSpec& spec,
                const ConditionState* state = nullptr) const;
  /// Slice spec with the configured slicing mode and patch resolution.
  SliceSpec slice_spec() const;

  NoiseBank bank;
  Sampler sampler;
  Param transform_param;  // "transforms", {n, 3, 3}; empty in conditional mode
  std::optional<ConditioningNets> conditioning;
  ConvStack critic;

  Adam adam_g;
  Adam adam_d;
  std::int64_t iteration = 0;

 private:
  TrainConfig config_;
};

/// Writes the version-tagged binary checkpoint.
void save_checkpoint(const Model& model, const std::string& path);

/// Reads a checkpoint, validating every record against the stored config.
/// When expected_mode is given, a different mode raises ModeError.
Model load_checkpoint(const std::string& path,
                      std::optional<TrainMode> expected_mode = std::nullopt);

/// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::string& path);

}  // namespace gramgan
