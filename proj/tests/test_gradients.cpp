// Finite-difference checks of every hand-written backward pass. Built
// against the double-precision library.
#include <gtest/gtest.h>

#include <random>

#include "fd_util.hpp"
#include "gramgan/conditioning.hpp"
#include "gramgan/losses.hpp"
#include "gramgan/sampler.hpp"
#include "gramgan/adaptation.hpp"
#include "gramgan/trainer.hpp"

using namespace gramgan;

static_assert(sizeof(Real) == sizeof(double), "gradient checks need the double build");

namespace {

std::vector<Real> normal_vec(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<Real> v(n);
  for (Real& x : v) x = g(rng);
  return v;
}

Tensor normal_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double sd = 1.0) {
  Tensor t(n, c, h, w);
  t.data = normal_vec(t.size(), rng, sd);
  return t;
}

void randomize_biases(const ParamList& params, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.1);
  for (Param* p : params)
    if (p->name.ends_with(".b") || p->name.find("sampler.b") == 0)
      for (Real& v : p->value) v = g(rng);
}

double dot(std::span<const Real> a, std::span<const Real> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Gradients, SamplerParametersNoiseAndModulation) {
  std::mt19937_64 rng(1);
  Rng init(2);
  Sampler s(8, 8, init);
  randomize_biases(s.params(), rng);
  const int rows = 6;
  auto noise = normal_vec(rows * 8, rng);
  const auto weights = normal_vec(rows * 3, rng);
  Modulation mod = Modulation::identity(8);
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    mod.gamma[l] = normal_vec(8, rng);
    mod.delta[l] = normal_vec(8, rng);
  }
  auto loss = [&] {
    std::vector<Real> rgb(rows * 3);
    s.forward_batch(noise, rows, &mod, rgb);
    return dot(rgb, weights);
  };
  zero_grads(s.params());
  std::vector<Real> d_noise(noise.size());
  Modulation d_mod;
  s.backward_batch(noise, rows, &mod, weights, d_noise, &d_mod);
  for (Param* p : s.params()) fd::check_param(*p, loss, 20, rng);
  for (std::size_t i = 0; i < noise.size(); i += 3)
    EXPECT_TRUE(fd::close(d_noise[i], fd::central(loss, noise[i]))) << "noise " << i;
  for (int l = 0; l < kSamplerHiddenLayers; ++l)
    for (int k = 0; k < 8; ++k) {
      EXPECT_TRUE(fd::close(d_mod.gamma[l][k], fd::central(loss, mod.gamma[l][k])));
      EXPECT_TRUE(fd::close(d_mod.delta[l][k], fd::central(loss, mod.delta[l][k])));
    }
}

TEST(Gradients, NoiseTransforms) {
  std::mt19937_64 rng(3);
  NoiseBank bank(4, 8, 5);
  Rng init(4);
  auto t = FrequencyTransforms::ladder(4, &init);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> coords(20);
  for (Vec3& c : coords) c = {u(rng), u(rng), u(rng)};
  const auto weights = normal_vec(coords.size() * 4, rng);
  auto flat = t.flatten();
  auto loss = [&] {
    std::vector<Real> eta(coords.size() * 4);
    eval_noise_batch(coords, FrequencyTransforms::from_flat(flat), bank, eta);
    return dot(eta, weights);
  };
  std::vector<Real> d_t(flat.size(), 0);
  eval_noise_backward(coords, t, bank, weights, d_t);
  for (std::size_t i = 0; i < flat.size(); ++i)
    EXPECT_TRUE(fd::close(d_t[i], fd::central(loss, flat[i]))) << "T entry " << i;
}

TEST(Gradients, CriticParametersInputAndFeatures) {
  std::mt19937_64 rng(5);
  Rng init(6);
  ConvStack critic("critic", ConvStackArch::critic(16, 8), &init);
  randomize_biases(critic.params(), rng);
  Tensor x = normal_tensor(2, 3, 16, 16, rng, 0.5);
  Tensor d_out(2, 1, 1, 1);
  d_out.data = {0.7, -1.3};
  ConvStack::Tape tape;
  const FeatureStack f0 = critic.extract(x, nullptr);
  FeatureStack d_feat;
  for (const Tensor& f : f0) d_feat.push_back(normal_tensor(f.n, f.c, f.h, f.w, rng));
  auto loss = [&] {
    const Tensor out = critic.forward(x, nullptr);
    const FeatureStack f = critic.extract(x, nullptr);
    double s = dot(out.data, d_out.data);
    for (std::size_t l = 0; l < f.size(); ++l) s += dot(f[l].data, d_feat[l].data);
    return s;
  };
  critic.forward(x, &tape);
  zero_grads(critic.params());
  const Tensor dx = critic.backward(tape, d_out, &d_feat, true, true);
  for (Param* p : critic.params()) fd::check_param(*p, loss, 10, rng);
  for (std::size_t i = 0; i < x.size(); i += 37)
    EXPECT_TRUE(fd::close(dx.data[i], fd::central(loss, x.data[i]))) << "input " << i;
}

TEST(Gradients, StyleLossWrtFakeFeatures) {
  std::mt19937_64 rng(7);
  FeatureStack real{normal_tensor(1, 3, 4, 4, rng), normal_tensor(1, 4, 2, 2, rng)};
  FeatureStack fake{normal_tensor(2, 3, 4, 4, rng), normal_tensor(2, 4, 2, 2, rng)};
  FeatureStack d_fake;
  style_loss(real, fake, 2.5, d_fake);
  auto loss = [&] { return 2.5 * style_loss(real, fake).total; };
  for (std::size_t l = 0; l < fake.size(); ++l)
    for (std::size_t i = 0; i < fake[l].size(); ++i)
      EXPECT_TRUE(fd::close(d_fake[l].data[i], fd::central(loss, fake[l].data[i])))
          << "layer " << l << " entry " << i;
}

TEST(Gradients, PenaltyInputGradientMatchesDifferences) {
  std::mt19937_64 rng(8);
  Rng init(9);
  ConvStack critic("critic", ConvStackArch::critic(8, 16), &init);
  randomize_biases(critic.params(), rng);
  Tensor u = normal_tensor(1, 3, 8, 8, rng, 0.5);
  ConvStack::Tape tape;
  critic.forward(u, &tape);
  const Tensor g = critic.input_gradient_of_output(tape, Tensor(1, 1, 1, 1, 1.0));
  auto score = [&] { return critic.forward(u, nullptr).data[0]; };
  for (std::size_t i = 0; i < u.size(); i += 5)
    EXPECT_TRUE(fd::close(g.data[i], fd::central(score, u.data[i]))) << "pixel " << i;
}

TEST(Gradients, PenaltyParameterGradient) {
  std::mt19937_64 rng(10);
  Rng init(11);
  ConvStack critic("critic", ConvStackArch::critic(8, 16), &init);
  randomize_biases(critic.params(), rng);
  const Tensor u = normal_tensor(3, 3, 8, 8, rng, 0.5);
  auto loss = [&] {
    const std::vector<Real> ones(3, 1.0);
    // t = 1 makes the interpolate equal to the first argument.
    return 4.0 * gradient_penalty_at(u, u, ones, critic).value;
  };
  zero_grads(critic.params());
  gradient_penalty_backward(u, critic, 4.0);
  int bad = 0;
  for (Param* p : critic.params()) bad += fd::check_param(*p, loss, 10, rng);
  EXPECT_EQ(bad, 0);
}

TEST(Gradients, ConditioningNetworks) {
  std::mt19937_64 rng(12);
  Rng init(13);
  ConditioningShape shape;
  shape.octaves = 4;
  shape.sampler_width = 8;
  shape.patch_size = 8;
  shape.encoder_width_divisor = 16;
  ConditioningNets nets(shape, init);
  // Break the zero-weight initialization so every path carries gradient.
  for (Param* p : nets.params())
    for (Real& v : p->value) v += 0.3 * std::normal_distribution<double>(0, 1)(rng);
  Tensor patches(2, 3, 8, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Real& v : patches.data) v = u(rng);

  ConditioningNets::StateGrads grads;
  grads.transforms = normal_vec(2 * 36, rng);
  for (int b = 0; b < 2; ++b) {
    Modulation m;
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      m.gamma[l] = normal_vec(8, rng);
      m.delta[l] = normal_vec(8, rng);
    }
    grads.modulation.push_back(m);
  }
  auto loss = [&] {
    ConditioningNets::Tape tape;
    const auto states = nets.forward(patches, tape);
    double s = 0;
    for (int b = 0; b < 2; ++b) {
      const auto t = states[b].transforms.flatten();
      s += dot(t, std::span<const Real>(grads.transforms).subspan(b * 36, 36));
      for (int l = 0; l < kSamplerHiddenLayers; ++l) {
        s += dot(states[b].modulation.gamma[l], grads.modulation[b].gamma[l]);
        s += dot(states[b].modulation.delta[l], grads.modulation[b].delta[l]);
      }
    }
    return s;
  };
  ConditioningNets::Tape tape;
  nets.forward(patches, tape);
  zero_grads(nets.params());
  nets.backward(tape, grads);
  int bad = 0;
  for (Param* p : nets.params()) bad += fd::check_param(*p, loss, 8, rng);
  EXPECT_EQ(bad, 0);
}

namespace {

TrainConfig shrunk_config(TrainMode mode) {
  TrainConfig c = TrainConfig::defaults(mode);
  c.octaves = 4;
  c.sampler_width = 8;
  c.patch_size = 16;
  c.critic_width_divisor = 16;
  c.encoder_width_divisor = 16;
  c.noise_resolution = 8;
  c.seed = 21;
  c.noise_seed = 22;
  return c;
}

// Generator loss of a fixed batch; the full chain from transforms and
// sampler weights through slicing, the critic and the Gram loss.
int check_generator_pass(Model& m, const GeneratorBatch& batch, const LossWeights& w,
                         std::mt19937_64& rng) {
  auto loss = [&] { return generator_pass(m, batch, w, false).loss_g; };
  zero_grads(m.all_params());
  generator_pass(m, batch, w, true);
  int bad = 0;
  for (Param* p : m.generator_params()) bad += fd::check_param(*p, loss, 6, rng);
  for (Param* p : m.critic_params())
    for (Real g : p->grad) bad += g != 0;
  return bad;
}

GeneratorBatch batch_for(const Model& m, std::mt19937_64& rng, int count) {
  Rng planes_rng(rng());
  GeneratorBatch b;
  for (int i = 0; i < count; ++i)
    b.planes.push_back(random_plane(SliceMode::Isotropic, planes_rng));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor r(count, 3, m.config().patch_size, m.config().patch_size);
  for (Real& v : r.data) v = u(rng);
  b.real = to_critic_range(r);
  return b;
}

}  // namespace

TEST(Gradients, GeneratorPassSingle) {
  std::mt19937_64 rng(30);
  Model m(shrunk_config(TrainMode::Single));
  randomize_biases(m.critic_params(), rng);
  const GeneratorBatch batch = batch_for(m, rng, 2);
  for (const LossWeights& w : {LossWeights{0.1, 1.0, 10}, LossWeights{0.0, 1.0, 10},
                               LossWeights{1.0, 0.0, 10}})
    EXPECT_EQ(check_generator_pass(m, batch, w, rng), 0) << "alpha " << w.alpha;
}

TEST(Gradients, GeneratorPassConditional) {
  std::mt19937_64 rng(31);
  Model m(shrunk_config(TrainMode::Conditional));
  randomize_biases(m.critic_params(), rng);
  for (Param* p : m.conditioning->params())
    for (Real& v : p->value) v += 0.1 * std::normal_distribution<double>(0, 1)(rng);
  GeneratorBatch batch = batch_for(m, rng, 2);
  batch.condition = Tensor(2, 3, 16, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Real& v : batch.condition.data) v = u(rng);
  EXPECT_EQ(check_generator_pass(m, batch, LossWeights{0.1, 1.0, 10}, rng), 0);
}

TEST(Gradients, AdaptationTheta) {
  std::mt19937_64 rng(32);
  Model m(shrunk_config(TrainMode::Conditional));
  randomize_biases(m.critic_params(), rng);
  Tensor patch(1, 3, 16, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Real& v : patch.data) v = u(rng);
  AdaptableParams theta = predict_theta(m, patch);
  for (int l = 0; l < kSamplerHiddenLayers; ++l)
    for (Real& v : theta.modulation.gamma[l]) v += 0.2 * std::normal_distribution<double>(0, 1)(rng);
  const FeatureStack real = m.critic.extract(to_critic_range(patch), nullptr);
  Rng planes_rng(4);
  const std::vector<SlicePlane> planes{random_plane(SliceMode::Isotropic, planes_rng),
                                       random_plane(SliceMode::Isotropic, planes_rng)};
  AdaptableParams grad;
  theta_style(m, theta, planes, m.critic, real, &grad);
  auto loss = [&] { return theta_style(m, theta, planes, m.critic, real); };

  auto flat = theta.transforms.flatten();
  const auto g_flat = grad.transforms.flatten();
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    auto loss_t = [&] {
      AdaptableParams t = theta;
      t.transforms = FrequencyTransforms::from_flat(flat);
      return theta_style(m, t, planes, m.critic, real);
    };
    EXPECT_TRUE(fd::close(g_flat[i], fd::central(loss_t, flat[i]))) << "T " << i;
  }
  for (int l = 0; l < kSamplerHiddenLayers; ++l)
    for (std::size_t k = 0; k < 8; k += 3) {
      EXPECT_TRUE(fd::close(grad.modulation.gamma[l][k],
                            fd::central(loss, theta.modulation.gamma[l][k])));
      EXPECT_TRUE(fd::close(grad.modulation.delta[l][k],
                            fd::central(loss, theta.modulation.delta[l][k])));
    }
  for (int l = 0; l < kSamplerNoisyLayers; ++l)
    for (std::size_t k = 0; k < theta.injectors[l].size(); k += 3)
      EXPECT_TRUE(fd::close(grad.injectors[l][k], fd::central(loss, theta.injectors[l][k])))
          << "A" << l << "[" << k << "]";
}
