#pragma once

#include <span>
#include <vector>

#include "gramgan/conv_stack.hpp"
#include "gramgan/layers.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan {

/// alpha: adversarial generator weight, beta: style weight, lambda: gradient
/// penalty weight.
struct LossWeights {
  double alpha = 0.1;
  double beta = 1.0;
  double lambda = 10.0;

  /// Throws ConfigError on negative weights, alpha = beta = 0, or beta = 0
  /// when training a conditional model.
  void validate(bool conditional) const;
};

struct StyleLossValue {
  double total = 0;
  std::vector<double> per_layer;
};

/// Gram matrix of one feature map stored as [channels x pixels]:
/// G(i, j) = sum_k F(i, k) F(j, k). Returned row-major [channels x channels].
std::vector<double> gram(std::span<const Real> features, int channels, int pixels);

/// L1 Gram distance averaged over layers, each layer normalised by
/// 1 / (4 N^2 M^2). Batches are compared pairwise (sample b against sample
/// b); a real stack with batch 1 is compared against every fake sample.
/// Per-sample values are averaged over the batch.
StyleLossValue style_loss(const FeatureStack& real, const FeatureStack& fake);

/// Same value; additionally writes weight * d(total)/d(fake) into d_fake.
StyleLossValue style_loss(const FeatureStack& real, const FeatureStack& fake, double weight,
                          FeatureStack& d_fake);

/// Squared-L2 Gram variant kept for ablations; same normalisation.
StyleLossValue style_loss_l2(const FeatureStack& real, const FeatureStack& fake);
StyleLossValue style_loss_l2(const FeatureStack& real, const FeatureStack& fake, double weight,
                             FeatureStack& d_fake);

/// mean(fake) - mean(real) + lambda * penalty
double critic_loss(std::span<const Real> scores_fake, std::span<const Real> scores_real,
                   double penalty, double lambda);

/// -alpha * mean(fake) + beta * style.total
double generator_loss(std::span<const Real> scores_fake, const StyleLossValue& style,
                      double alpha, double beta);

struct PenaltyResult {
  double value = 0;
  std::vector<double> grad_norms;  // ||grad_u D(u)|| per sample
};

/// WGAN-GP term: u = t r + (1 - t) f with one t ~ U[0,1] per sample, then
/// mean over samples of (||grad_u D(u)||_2 - 1)^2.
PenaltyResult gradient_penalty(const Tensor& real, const Tensor& fake, const ConvStack& critic,
                               Rng& rng);

/// Same, with caller-supplied interpolation coefficients.
PenaltyResult gradient_penalty_at(const Tensor& real, const Tensor& fake,
                                  std::span<const Real> t, const ConvStack& critic);

/// Evaluates the penalty at the given interpolates u and accumulates
/// weight * d(penalty)/d(critic parameters) into the critic's gradients.
PenaltyResult gradient_penalty_backward(const Tensor& interpolates, ConvStack& critic,
                                        double weight);

/// Interpolates t r + (1 - t) f per sample.
Tensor interpolate(const Tensor& real, const Tensor& fake, std::span<const Real> t);

}  // namespace gramgan
