#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "gramgan/errors.hpp"
#include "gramgan/losses.hpp"

using namespace gramgan;

namespace {

std::vector<double> brute_gram(const std::vector<Real>& f, int n, int m) {
  std::vector<double> g(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < m; ++k) g[i * n + j] += double(f[i * m + k]) * double(f[j * m + k]);
  return g;
}

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(n, c, h, w);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Real& v : t.data) v = static_cast<Real>(g(rng));
  return t;
}

// D(x) = <g, x> + b realised as a conv-free stack with one dense unit.
ConvStack linear_critic(int size, double gradient_norm, std::uint64_t seed) {
  ConvStackArch arch;
  arch.input_size = size;
  arch.dense = {1};
  Rng rng(seed);
  ConvStack critic("critic", arch, &rng);
  Dense& d = critic.dense[0];
  double sq = 0;
  for (Real v : d.weight.value) sq += double(v) * v;
  const double k = gradient_norm / (d.scale() * std::sqrt(sq));
  for (Real& v : d.weight.value) v = static_cast<Real>(v * k);
  d.bias.value[0] = Real(0.3);
  return critic;
}

}  // namespace

TEST(Gram, OnesChannel) {
  const std::vector<Real> f{1, 1, 1, 1};
  const auto g = gram(f, 1, 4);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0], 4.0);
}

TEST(Gram, OrthogonalRowsGiveDiagonal) {
  const std::vector<Real> f{1, 0, 2, 0, 0, 3, 0, -1};
  const auto g = gram(f, 2, 4);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[0], 5.0);
  EXPECT_EQ(g[3], 10.0);
}

TEST(Gram, MatchesDoubleLoopAndIsSymmetricPsd) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = random_tensor(1, 4, 1, 6, rng);
    const auto g = gram(t.data, 4, 6);
    const auto ref = brute_gram(t.data, 4, 6);
    Eigen::MatrixXd m(4, 4);
    for (int i = 0; i < 16; ++i) {
      EXPECT_NEAR(g[i], ref[i], 1e-6) << "trial " << trial << " i " << i;
      m(i / 4, i % 4) = g[i];
    }
    EXPECT_LE((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), -1e-5);
  }
}

TEST(Gram, RejectsBadShape) {
  const std::vector<Real> f{1, 2, 3};
  EXPECT_THROW(gram(f, 2, 2), std::invalid_argument);
  EXPECT_THROW(gram({}, 1, 0), std::invalid_argument);
}

TEST(StyleLoss, HandComputedValue) {
  Tensor real(1, 1, 1, 2, Real(1));
  Tensor fake(1, 1, 1, 2, Real(0));
  const auto v = style_loss({real}, {fake});
  EXPECT_EQ(v.total, 0.125);
  ASSERT_EQ(v.per_layer.size(), 1u);
  EXPECT_EQ(v.per_layer[0], 0.125);
}

TEST(StyleLoss, IdenticalStacksGiveZero) {
  std::mt19937_64 rng(2);
  FeatureStack s{random_tensor(2, 3, 4, 4, rng), random_tensor(2, 5, 2, 2, rng)};
  EXPECT_EQ(style_loss(s, s).total, 0.0);
}

TEST(StyleLoss, SymmetricInArguments) {
  std::mt19937_64 rng(3);
  FeatureStack a{random_tensor(2, 3, 4, 4, rng), random_tensor(2, 5, 2, 2, rng)};
  FeatureStack b{random_tensor(2, 3, 4, 4, rng), random_tensor(2, 5, 2, 2, rng)};
  const auto ab = style_loss(a, b), ba = style_loss(b, a);
  EXPECT_DOUBLE_EQ(ab.total, ba.total);
  EXPECT_GT(ab.total, 0.0);
  EXPECT_NEAR(ab.total, (ab.per_layer[0] + ab.per_layer[1]) / 2, 1e-15);
}

TEST(StyleLoss, InvariantToSpatialPermutation) {
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor(1, 3, 4, 4, rng);
  const Tensor b = random_tensor(1, 3, 4, 4, rng);
  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor p = b;
  for (int ch = 0; ch < 3; ++ch)
    for (int k = 0; k < 16; ++k) p.data[ch * 16 + k] = b.data[ch * 16 + perm[k]];
  EXPECT_NEAR(style_loss({a}, {b}).total, style_loss({a}, {p}).total, 1e-6);
}

TEST(StyleLoss, SingleRealBroadcastsOverFakes) {
  std::mt19937_64 rng(5);
  const Tensor r = random_tensor(1, 2, 3, 3, rng);
  const Tensor f = random_tensor(2, 2, 3, 3, rng);
  Tensor f0(1, 2, 3, 3), f1(1, 2, 3, 3);
  std::copy(f.sample(0), f.sample(0) + 18, f0.data.begin());
  std::copy(f.sample(1), f.sample(1) + 18, f1.data.begin());
  const double want = 0.5 * (style_loss({r}, {f0}).total + style_loss({r}, {f1}).total);
  EXPECT_NEAR(style_loss({r}, {f}).total, want, 1e-12);
}

TEST(StyleLoss, ShapeMismatchThrows) {
  EXPECT_THROW(style_loss({Tensor(1, 2, 2, 2)}, {Tensor(1, 3, 2, 2)}), std::invalid_argument);
  EXPECT_THROW(style_loss({Tensor(1, 2, 2, 2)}, {}), std::invalid_argument);
}

TEST(CriticLoss, Arithmetic) {
  const std::vector<Real> same{0.5f, -1};
  EXPECT_EQ(critic_loss(same, same, 0.0, 10.0), 0.0);
  const std::vector<Real> fake{1, 1}, real{0, 0};
  EXPECT_DOUBLE_EQ(critic_loss(fake, real, 0.5, 10.0), 6.0);
  EXPECT_DOUBLE_EQ(critic_loss(fake, real, 0.5, 0.0), 1.0);
  EXPECT_THROW(critic_loss(fake, real, -0.1, 10.0), std::invalid_argument);
}

TEST(GeneratorLoss, Arithmetic) {
  StyleLossValue s{0.5, {0.5}};
  const std::vector<Real> fake{2, 2};
  EXPECT_DOUBLE_EQ(generator_loss(fake, s, 0.1, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(generator_loss(fake, s, 0.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(generator_loss(fake, s, 1.0, 0.0), -2.0);
  EXPECT_THROW(generator_loss(fake, s, 0.0, 0.0), std::invalid_argument);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate(true));
  w.beta = 0;
  EXPECT_NO_THROW(w.validate(false));
  EXPECT_THROW(w.validate(true), ConfigError);
  w.alpha = 0;
  EXPECT_THROW(w.validate(false), ConfigError);
}

TEST(GradientPenalty, UnitLinearCriticGivesZero) {
  const ConvStack critic = linear_critic(8, 1.0, 1);
  std::mt19937_64 rng(6);
  Rng t_rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor r = random_tensor(4, 3, 8, 8, rng), f = random_tensor(4, 3, 8, 8, rng);
    EXPECT_NEAR(gradient_penalty(r, f, critic, t_rng).value, 0.0, 1e-6);
  }
}

TEST(GradientPenalty, ZeroCriticGivesOne) {
  const ConvStack critic = linear_critic(8, 0.0, 1);
  std::mt19937_64 rng(8);
  Rng t_rng(9);
  const Tensor r = random_tensor(4, 3, 8, 8, rng), f = random_tensor(4, 3, 8, 8, rng);
  EXPECT_NEAR(gradient_penalty(r, f, critic, t_rng).value, 1.0, 1e-6);
}

TEST(GradientPenalty, ScaledLinearCritic) {
  const ConvStack critic = linear_critic(4, 3.0, 2);
  std::mt19937_64 rng(10);
  Rng t_rng(11);
  const Tensor r = random_tensor(2, 3, 4, 4, rng), f = random_tensor(2, 3, 4, 4, rng);
  EXPECT_NEAR(gradient_penalty(r, f, critic, t_rng).value, 4.0, 1e-5);
}

TEST(GradientPenalty, ShapeMismatchThrows) {
  const ConvStack critic = linear_critic(4, 1.0, 2);
  Rng t_rng(1);
  EXPECT_THROW(gradient_penalty(Tensor(1, 3, 4, 4), Tensor(2, 3, 4, 4), critic, t_rng),
               std::invalid_argument);
}

TEST(GradientPenalty, InterpolatesPerSample) {
  Tensor r(2, 1, 1, 1), f(2, 1, 1, 1);
  r.data = {1, 1};
  f.data = {0, 0};
  const std::vector<Real> t{0.25f, 0.75f};
  const Tensor u = interpolate(r, f, t);
  EXPECT_EQ(u.data[0], 0.25f);
  EXPECT_EQ(u.data[1], 0.75f);
}
