// Finite-difference check of L_style and L_G against every generator-side
// parameter of a shrunk single-exemplar stack. Built against the double
// library; prints one summary line read by the acceptance runner.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "gramgan/trainer.hpp"

using namespace gramgan;

static_assert(sizeof(Real) == sizeof(double), "gradient checks need the double build");

namespace {

struct Tally {
  int points = 0;
  int mismatches = 0;
  double worst = 0;
};

void check(Model& m, const GeneratorBatch& batch, const LossWeights& w, int points,
           std::mt19937_64& rng, Tally& tally) {
  zero_grads(m.all_params());
  generator_pass(m, batch, w, true);
  const ParamList params = m.generator_params();
  for (int k = 0; k < points; ++k) {
    // Round-robin over tensors so every generator-side record is probed.
    Param& p = *params[k % params.size()];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(rng);
    // Trilinear noise lookup is only piecewise smooth. A small step keeps
    // the probes from straddling grid cell faces and LReLU kinks.
    const double h = 1e-7, keep = p.value[i];
    p.value[i] = keep + h;
    const double up = generator_pass(m, batch, w, false).loss_g;
    p.value[i] = keep - h;
    const double down = generator_pass(m, batch, w, false).loss_g;
    p.value[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double analytic = p.grad[i];
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double err = std::abs(analytic - numeric);
    const double rel = scale > 0 ? err / scale : 0;
    // Entries whose gradient is below 1e-8 in both estimates count as equal.
    if (err > 1e-3 * scale + 1e-8) {
      ++tally.mismatches;
      std::fprintf(stderr, "%s[%zu] analytic %.10g numeric %.10g\n", p.name.c_str(), i, analytic,
                   numeric);
    }
    if (scale > 1e-8) tally.worst = std::max(tally.worst, rel);
    ++tally.points;
  }
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig c = TrainConfig::defaults(TrainMode::Single);
  c.octaves = 4;
  c.sampler_width = 8;
  c.patch_size = 16;
  c.critic_width_divisor = 16;
  c.noise_resolution = 8;
  c.seed = 41;
  c.noise_seed = 42;
  Model m(c);

  std::mt19937_64 rng(43);
  std::normal_distribution<double> g(0.0, 0.1);
  for (Param* p : m.critic_params())
    if (p->name.ends_with(".b"))
      for (Real& v : p->value) v = g(rng);

  GeneratorBatch batch;
  Rng planes(44);
  for (int b = 0; b < 2; ++b) batch.planes.push_back(random_plane(SliceMode::Isotropic, planes));
  Tensor real(2, 3, 16, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Real& v : real.data) v = u(rng);
  batch.real = to_critic_range(real);

  Tally style, full;
  check(m, batch, LossWeights{0.0, 1.0, 10.0}, 100, rng, style);
  check(m, batch, LossWeights{0.1, 1.0, 10.0}, 100, rng, full);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("style %d %d %.3g full %d %d %.3g seconds %.2f\n", style.points, style.mismatches,
              style.worst, full.points, full.mismatches, full.worst, seconds);
  return style.mismatches + full.mismatches == 0 ? 0 : 1;
}
