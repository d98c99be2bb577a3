#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gramgan/model.hpp"

namespace gramgan {

struct StepMetrics {
  std::int64_t iteration = 0;
  double loss_d = 0;
  double loss_g = 0;
  double loss_style = 0;
  /// mean D(r) - mean D(f) from the critic phase.
  double wasserstein = 0;
  /// Unweighted gradient penalty from the critic phase.
  double penalty = 0;
};

/// Inputs of one generator evaluation.
struct GeneratorBatch {
  Tensor real;                      // [B x 3 x P x P], normalized to [-1, 1]
  std::vector<SlicePlane> planes;   // B planes for the fake slices
  Tensor condition;                 // [B x 3 x P x P] in [0, 1]; conditional mode only
};

struct GeneratorResult {
  double loss_g = 0;
  StyleLossValue style;
  std::vector<Real> scores;
};

/// Renders fakes on batch.planes, evaluates L_G = -alpha E[D(f)] + beta
/// L_style against batch.real, and when accumulate is set adds dL_G/dtheta
/// to every generator-side parameter gradient. The critic is read only.
GeneratorResult generator_pass(Model& model, const GeneratorBatch& batch,
                               const LossWeights& weights, bool accumulate);

struct CriticResult {
  double loss_d = 0;
  double penalty = 0;
  double wasserstein = 0;
};

/// L_D on normalized real and fake batches with per-sample interpolation
/// coefficients t; accumulates dL_D/dtheta into the critic when asked.
CriticResult critic_pass(Model& model, const Tensor& real, const Tensor& fake,
                         std::span<const Real> t, bool accumulate);

/// Renders fake slices for the given planes, normalized to [-1, 1].
Tensor render_fakes(const Model& model, const std::vector<SlicePlane>& planes,
                    const std::vector<ConditionState>* states);

/// Alternating WGAN-GP training for both model modes.
class Trainer {
 public:
  /// Exemplars are [1 x 3 x H x W] images in [0, 1], each at least
  /// patch_size in both directions.
  Trainer(Model& model, std::vector<Tensor> exemplars);

  /// One critic update followed by one generator update.
  StepMetrics step();

  /// Dispatch targets of step(); exposed for tests.
  StepMetrics train_step_single();
  StepMetrics train_step_conditional();

  /// Runs until model.iteration reaches `until`, appending metrics to
  /// metrics_csv and checkpointing every config.checkpoint_every steps into
  /// config.output_dir. On a non-finite loss a diagnostic snapshot is saved
  /// and TrainingError rethrown with its path. Returns the final checkpoint.
  std::string run(std::int64_t until, const std::string& metrics_csv,
                  const std::function<void(const StepMetrics&)>& on_step = {});

  /// Uniformly placed square crop of exemplar k.
  Tensor random_crop(int k, Rng& rng) const;

  /// When set, both phases verify that they leave the other side's
  /// parameters untouched (fingerprint check, throws std::logic_error).
  bool check_phase_isolation = true;

 private:
  struct Batch {
    Tensor real;       // normalized
    Tensor condition;  // [0, 1], conditional only
  };
  StepMetrics run_step(const Batch& batch, Rng& rng);
  std::vector<SlicePlane> random_planes(Rng& rng) const;

  Model& model_;
  std::vector<Tensor> exemplars_;
};

/// Deterministic per-iteration seed.
std::uint64_t step_seed(std::uint64_t seed, std::int64_t iteration);

/// Maps [0, 1] images to [-1, 1] (critic input convention).
Tensor to_critic_range(const Tensor& images);

}  // namespace gramgan
