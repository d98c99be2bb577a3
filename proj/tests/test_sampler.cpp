#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "gramgan/sampler.hpp"
#include "gramgan/slicer.hpp"

using namespace gramgan;

namespace {

std::vector<Real> random_noise(int rows, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Real> v(static_cast<std::size_t>(rows) * n);
  for (Real& x : v) x = static_cast<Real>(g(rng));
  return v;
}

Sampler make_sampler(int n, int width, std::uint64_t seed) {
  Rng rng(seed);
  Sampler s(n, width, rng);
  // Nonzero biases so that tests do not pass by accident.
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& b : s.biases)
    for (Real& v : b.value) v = static_cast<Real>(g(rng));
  return s;
}

// Scalar re-implementation of the forward pass in double precision.
Rgb oracle_forward(const Sampler& s, std::span<const Real> noise) {
  const int w = s.width();
  const int bin = s.bin_size();
  const double ws = std::sqrt(2.0 / w), as = std::sqrt(2.0 / bin);
  std::vector<double> x(s.constant.value.begin(), s.constant.value.end());
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    std::vector<double> y(w);
    for (int o = 0; o < w; ++o) {
      double acc = s.biases[l].value[o];
      for (int i = 0; i < w; ++i) acc += ws * s.weights[l].value[o * w + i] * x[i];
      if (l < kSamplerNoisyLayers)
        for (int k = 0; k < bin; ++k) acc += as * s.injection[l].value[o * bin + k] * noise[l * bin + k];
      y[o] = acc > 0 ? acc : 0.2 * acc;
    }
    x = y;
  }
  double out[3];
  for (int o = 0; o < 3; ++o) {
    out[o] = s.out_bias.value[o];
    for (int i = 0; i < w; ++i) out[o] += ws * s.out_weight.value[o * w + i] * x[i];
  }
  return {static_cast<Real>(out[0]), static_cast<Real>(out[1]), static_cast<Real>(out[2])};
}

}  // namespace

TEST(Sampler, ParameterNamesAndShapes) {
  Rng rng(1);
  Sampler s(16, 128, rng);
  std::vector<std::string> names;
  for (const Param* p : s.params()) names.push_back(p->name);
  for (const char* want : {"sampler.const", "sampler.W0", "sampler.W4", "sampler.b0", "sampler.b4",
                           "sampler.A0", "sampler.A3", "sampler.Wout", "sampler.bout"})
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  EXPECT_EQ(std::find(names.begin(), names.end(), "sampler.A4"), names.end());
  EXPECT_EQ(s.injection[0].shape, (std::vector<int>{128, 4}));
  EXPECT_EQ(s.weights[0].shape, (std::vector<int>{128, 128}));
  EXPECT_EQ(s.out_weight.shape, (std::vector<int>{3, 128}));
}

TEST(Sampler, RejectsOctavesNotDivisibleByFour) {
  Rng rng(1);
  EXPECT_THROW(Sampler(30, 16, rng), std::invalid_argument);
}

TEST(Sampler, ZeroNoiseIsFixedPropagationOfConstant) {
  const Sampler s = make_sampler(8, 16, 3);
  std::vector<Real> zero(8, Real(0));
  const Rgb got = s.forward(zero);
  const Rgb want = oracle_forward(s, zero);
  EXPECT_NEAR(got.r, want.r, 1e-5);
  EXPECT_NEAR(got.g, want.g, 1e-5);
  EXPECT_NEAR(got.b, want.b, 1e-5);
  // Zero transforms read the same lattice point everywhere.
  NoiseBank bank(8, 8, 1);
  const auto t = FrequencyTransforms::zeros(8);
  const std::vector<Vec3> coords{{0, 0, 0}, {0.3f, 2, -1}, {9, 9, 9}};
  const auto colors = evaluate_texture(coords, t, bank, s);
  EXPECT_EQ(colors[0], colors[1]);
  EXPECT_EQ(colors[1], colors[2]);
}

TEST(Sampler, MatchesScalarOracleWithNoise) {
  const Sampler s = make_sampler(8, 16, 13);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto noise = random_noise(1, 8, rng);
    const Rgb got = s.forward(noise);
    const Rgb want = oracle_forward(s, noise);
    EXPECT_NEAR(got.r, want.r, 1e-5);
    EXPECT_NEAR(got.g, want.g, 1e-5);
    EXPECT_NEAR(got.b, want.b, 1e-5);
  }
}

TEST(Sampler, IdentityModulationIsBitwiseNeutral) {
  const Sampler s = make_sampler(8, 16, 4);
  std::mt19937_64 rng(2);
  const auto noise = random_noise(64, 8, rng);
  std::vector<Real> plain(64 * 3), modulated(64 * 3);
  s.forward_batch(noise, 64, nullptr, plain);
  const auto id = Modulation::identity(16);
  s.forward_batch(noise, 64, &id, modulated);
  EXPECT_EQ(std::memcmp(plain.data(), modulated.data(), plain.size() * sizeof(Real)), 0);
}

TEST(Sampler, MissingModulationEntriesThrow) {
  const Sampler s = make_sampler(8, 16, 4);
  std::vector<Real> noise(8, Real(0));
  auto bad = Modulation::identity(16);
  bad.gamma[4].clear();
  EXPECT_THROW(s.forward(noise, &bad), std::invalid_argument);
  std::vector<Real> short_noise(7, Real(0));
  EXPECT_THROW(s.forward(short_noise), std::invalid_argument);
}

TEST(Sampler, NoiseBinOnlyAffectsLaterLayers) {
  const Sampler s = make_sampler(8, 16, 5);
  std::mt19937_64 rng(3);
  for (int bin = 0; bin < 4; ++bin) {
    const auto noise = random_noise(1, 8, rng);
    auto moved = noise;
    moved[bin * 2] += 0.7f;
    moved[bin * 2 + 1] -= 0.4f;
    SamplerTrace a, b;
    std::vector<Real> rgb(3);
    s.forward_batch(noise, 1, nullptr, rgb, &a);
    s.forward_batch(moved, 1, nullptr, rgb, &b);
    for (int layer = 0; layer < kSamplerHiddenLayers; ++layer) {
      if (layer < bin)
        EXPECT_EQ(a.activations[layer], b.activations[layer]) << "bin " << bin;
      else if (layer == bin)
        EXPECT_NE(a.activations[layer], b.activations[layer]) << "bin " << bin;
    }
  }
}

TEST(Sampler, BatchMatchesSingleForwards) {
  const Sampler s = make_sampler(8, 16, 6);
  std::mt19937_64 rng(4);
  const int rows = 1024;
  const auto noise = random_noise(rows, 8, rng);
  std::vector<Real> rgb(rows * 3);
  s.forward_batch(noise, rows, nullptr, rgb);
  double worst = 0;
  for (int r = 0; r < rows; ++r) {
    const Rgb one = s.forward(std::span(noise).subspan(r * 8, 8));
    const Real single[3] = {one.r, one.g, one.b};
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(double(single[k] - rgb[r * 3 + k])));
  }
  EXPECT_EQ(worst, 0.0);
}

TEST(Sampler, DuplicateRowsGiveDuplicateOutputs) {
  const Sampler s = make_sampler(8, 16, 7);
  std::mt19937_64 rng(5);
  auto noise = random_noise(2, 8, rng);
  std::copy(noise.begin(), noise.begin() + 8, noise.begin() + 8);
  std::vector<Real> rgb(6);
  s.forward_batch(noise, 2, nullptr, rgb);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(rgb[k], rgb[3 + k]);
}

TEST(Sampler, EqualNoiseVectorsGiveEqualColors) {
  const Sampler s = make_sampler(8, 16, 8);
  NoiseBank bank(8, 8, 2);
  const auto t = FrequencyTransforms::identity(8);
  // c and c + (1, 0, 2) collide under the wrap period of one world unit.
  const std::vector<Vec3> coords{{0.25f, 0.5f, 0.125f}, {1.25f, 0.5f, 2.125f}};
  const auto colors = evaluate_texture(coords, t, bank, s);
  EXPECT_NEAR(colors[0].r, colors[1].r, 1e-6);
  EXPECT_NEAR(colors[0].g, colors[1].g, 1e-6);
  EXPECT_NEAR(colors[0].b, colors[1].b, 1e-6);
}

TEST(Sampler, RenderedSliceEqualsPointwiseEvaluation) {
  const Sampler s = make_sampler(8, 16, 9);
  NoiseBank bank(8, 16, 3);
  Rng rng(12);
  const auto t = FrequencyTransforms::ladder(8, &rng);
  SliceSpec spec;
  spec.resolution = 32;
  spec.pixel_spacing = Real(1) / 32;
  const SlicePlane plane = random_plane(SliceMode::Isotropic, rng);
  const Tensor img = render_slice(plane, spec, [&](std::span<const Vec3> c, std::span<Real> out) {
    evaluate_texture(c, t, bank, s, nullptr, out);
  });
  const auto coords = plane_to_coords(plane, spec);
  const auto colors = evaluate_texture(coords, t, bank, s);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      const Rgb& c = colors[i * 32 + j];
      EXPECT_EQ(img.at(0, 0, i, j), c.r);
      EXPECT_EQ(img.at(0, 1, i, j), c.g);
      EXPECT_EQ(img.at(0, 2, i, j), c.b);
    }
}
