#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramgan/losses.hpp"
#include "gramgan/slicer.hpp"

namespace gramgan {

enum class TrainMode { Single, Conditional };

const char* to_string(TrainMode mode);

/// Everything needed to build, train and reload a model. Serialized as JSON
/// both as the user-facing config file and inside every checkpoint.
struct TrainConfig {
  TrainMode mode = TrainMode::Single;
  int octaves = 16;
  int sampler_width = 128;
  /// Divides every critic (and encoder) channel count; 1 = published sizes.
  int critic_width_divisor = 1;
  int encoder_width_divisor = 1;
  int patch_size = 128;
  int noise_resolution = 64;
  std::uint64_t noise_seed = 0;
  std::uint64_t seed = 0;

  double lr_d = 2e-3;
  double lr_g = 5e-4;
  LossWeights weights;
  /// "l1" (default) or "l2" for the Gram-distance ablation.
  std::string style_distance = "l1";

  std::int64_t iterations = 50000;
  int batch_size = 8;
  SliceMode slice_mode = SliceMode::Isotropic;
  int grain_axis = 2;
  std::int64_t checkpoint_every = 1000;

  std::vector<std::string> exemplars;
  std::string output_dir = "run";

  /// Defaults for a mode (octave count and iteration budget differ).
  static TrainConfig defaults(TrainMode mode);

  /// Throws ConfigError naming the offending field.
  void validate() const;

  std::string to_json() const;
  /// Missing keys keep their mode defaults; unknown keys are rejected.
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::string& path);
};

}  // namespace gramgan
