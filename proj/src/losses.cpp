#include "gramgan/losses.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gramgan/errors.hpp"

namespace gramgan {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatD to_matrix(const Real* data, int rows, int cols) {
  return Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             data, rows, cols)
      .cast<double>();
}

MatD gram_matrix(const Real* data, int channels, int pixels) {
  MatD f = to_matrix(data, channels, pixels);
  MatD g(channels, channels);
  g.noalias() = f * f.transpose();
  return g;
}

void check_stacks(const FeatureStack& real, const FeatureStack& fake) {
  if (real.size() != fake.size() || real.empty())
    throw std::invalid_argument("style_loss: stacks have " + std::to_string(real.size()) +
                                " and " + std::to_string(fake.size()) + " layers");
  for (std::size_t l = 0; l < real.size(); ++l) {
    const Tensor& r = real[l];
    const Tensor& f = fake[l];
    if (r.c != f.c || r.h != f.h || r.w != f.w || (r.n != f.n && r.n != 1))
      throw std::invalid_argument("style_loss: layer " + std::to_string(l) + " shapes " +
                                  r.shape_string() + " vs " + f.shape_string());
    if (f.pixels() < 1) throw std::invalid_argument("style_loss: empty feature map");
  }
}

template <typename Distance>
StyleLossValue style_loss_impl(const FeatureStack& real, const FeatureStack& fake,
                               double weight, FeatureStack* d_fake, Distance distance) {
  check_stacks(real, fake);
  const std::size_t layers = real.size();
  StyleLossValue out;
  out.per_layer.assign(layers, 0.0);
  if (d_fake) {
    d_fake->clear();
    for (const Tensor& f : fake) d_fake->emplace_back(f.n, f.c, f.h, f.w);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& r = real[l];
    const Tensor& f = fake[l];
    const int ch = f.c;
    const int px = f.pixels();
    const double norm = 1.0 / (4.0 * ch * ch * static_cast<double>(px) * px);
    const int batch = f.n;
    std::vector<MatD> real_grams;
    for (int i = 0; i < r.n; ++i) real_grams.push_back(gram_matrix(r.sample(i), ch, px));
    double sum = 0;
    for (int b = 0; b < batch; ++b) {
      const MatD& gr = real_grams[r.n == 1 ? 0 : b];
      MatD gf = gram_matrix(f.sample(b), ch, px);
      MatD diff = gr - gf;
      sum += norm * distance.value(diff);
      if (d_fake) {
        // d/dGf of the distance, then dF = (S + S^T) F = 2 S F for symmetric S.
        MatD s = distance.grad_wrt_fake(diff);
        const double scale = weight * norm / (static_cast<double>(layers) * batch);
        MatD df = (2.0 * scale) * (s * to_matrix(f.sample(b), ch, px));
        Real* dst = (*d_fake)[l].sample(b);
        for (Eigen::Index i = 0; i < df.size(); ++i) dst[i] = static_cast<Real>(df.data()[i]);
      }
    }
    out.per_layer[l] = sum / batch;
  }
  out.total = std::accumulate(out.per_layer.begin(), out.per_layer.end(), 0.0) / layers;
  return out;
}

struct L1Distance {
  double value(const MatD& diff) const { return diff.cwiseAbs().sum(); }
  MatD grad_wrt_fake(const MatD& diff) const {
    return diff.unaryExpr([](double d) { return d > 0 ? -1.0 : (d < 0 ? 1.0 : 0.0); });
  }
};

struct L2Distance {
  double value(const MatD& diff) const { return diff.squaredNorm(); }
  MatD grad_wrt_fake(const MatD& diff) const { return -2.0 * diff; }
};

double mean(std::span<const Real> v) {
  if (v.empty()) throw std::invalid_argument("loss: empty score batch");
  double s = 0;
  for (Real x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void LossWeights::validate(bool conditional) const {
  if (alpha < 0 || beta < 0 || lambda < 0)
    throw ConfigError("loss weights must be non-negative");
  if (alpha == 0 && beta == 0)
    throw ConfigError("alpha and beta cannot both be zero");
  if (conditional && beta <= 0)
    throw ConfigError("conditional training requires beta > 0 (the style term)");
}

std::vector<double> gram(std::span<const Real> features, int channels, int pixels) {
  if (channels < 1 || pixels < 1 ||
      features.size() != static_cast<std::size_t>(channels) * pixels)
    throw std::invalid_argument("gram: feature map must be channels x pixels with pixels >= 1");
  MatD g = gram_matrix(features.data(), channels, pixels);
  return {g.data(), g.data() + g.size()};
}

StyleLossValue style_loss(const FeatureStack& real, const FeatureStack& fake) {
  return style_loss_impl(real, fake, 0.0, nullptr, L1Distance{});
}

StyleLossValue style_loss(const FeatureStack& real, const FeatureStack& fake, double weight,
                          FeatureStack& d_fake) {
  return style_loss_impl(real, fake, weight, &d_fake, L1Distance{});
}

StyleLossValue style_loss_l2(const FeatureStack& real, const FeatureStack& fake) {
  return style_loss_impl(real, fake, 0.0, nullptr, L2Distance{});
}

StyleLossValue style_loss_l2(const FeatureStack& real, const FeatureStack& fake, double weight,
                             FeatureStack& d_fake) {
  return style_loss_impl(real, fake, weight, &d_fake, L2Distance{});
}

double critic_loss(std::span<const Real> scores_fake, std::span<const Real> scores_real,
                   double penalty, double lambda) {
  if (penalty < 0) throw std::invalid_argument("critic_loss: negative gradient penalty");
  return mean(scores_fake) - mean(scores_real) + lambda * penalty;
}

double generator_loss(std::span<const Real> scores_fake, const StyleLossValue& style,
                      double alpha, double beta) {
  if (alpha < 0 || beta < 0) throw std::invalid_argument("generator_loss: negative weight");
  if (alpha == 0 && beta == 0)
    throw std::invalid_argument("generator_loss: alpha and beta are both zero");
  return -alpha * mean(scores_fake) + beta * style.total;
}

Tensor interpolate(const Tensor& real, const Tensor& fake, std::span<const Real> t) {
  if (!real.same_shape(fake))
    throw std::invalid_argument("gradient_penalty: real " + real.shape_string() + " vs fake " +
                                fake.shape_string());
  if (t.size() != static_cast<std::size_t>(real.n))
    throw std::invalid_argument("gradient_penalty: one coefficient per sample required");
  Tensor u(real.n, real.c, real.h, real.w);
  for (int b = 0; b < real.n; ++b) {
    const Real* r = real.sample(b);
    const Real* f = fake.sample(b);
    Real* dst = u.sample(b);
    for (std::size_t i = 0; i < real.sample_size(); ++i)
      dst[i] = t[b] * r[i] + (Real(1) - t[b]) * f[i];
  }
  return u;
}

namespace {

PenaltyResult penalty_impl(const Tensor& u, const ConvStack& critic, ConvStack* sink,
                           double weight) {
  if (critic.output_dim() != 1)
    throw std::invalid_argument("gradient_penalty: critic must output one score");
  ConvStack::Tape tape;
  critic.forward(u, &tape);
  Tensor ones(u.n, 1, 1, 1, Real(1));
  ConvStack::Deltas deltas;
  const Tensor grad = sink ? sink->backward(tape, ones, nullptr, false, true, &deltas)
                           : critic.input_gradient_of_output(tape, ones);

  PenaltyResult out;
  Tensor direction = grad;
  for (int b = 0; b < u.n; ++b) {
    double sq = 0;
    for (Real g : grad.sample_span(b)) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw TrainingError("gradient penalty: non-finite critic gradient");
    out.grad_norms.push_back(norm);
    out.value += (norm - 1.0) * (norm - 1.0);
    // d/dtheta (||g|| - 1)^2 = 2 (||g|| - 1) / ||g|| * d/dtheta <g, g_fixed>
    const double coef = norm > 0 ? weight * 2.0 * (norm - 1.0) / (norm * u.n) : 0.0;
    for (Real& v : direction.sample_span(b)) v = static_cast<Real>(v * coef);
  }
  out.value /= u.n;
  if (sink && weight != 0) sink->accumulate_directional_grads(tape, deltas, direction);
  return out;
}

}  // namespace

PenaltyResult gradient_penalty_at(const Tensor& real, const Tensor& fake,
                                  std::span<const Real> t, const ConvStack& critic) {
  return penalty_impl(interpolate(real, fake, t), critic, nullptr, 0.0);
}

PenaltyResult gradient_penalty(const Tensor& real, const Tensor& fake, const ConvStack& critic,
                               Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Real> t(real.n);
  for (Real& v : t) v = static_cast<Real>(unit(rng));
  return gradient_penalty_at(real, fake, t, critic);
}

PenaltyResult gradient_penalty_backward(const Tensor& interpolates, ConvStack& critic,
                                        double weight) {
  return penalty_impl(interpolates, critic, &critic, weight);
}

}  // namespace gramgan
