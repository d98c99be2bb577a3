#include "gramgan/noise_field.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gramgan {

NoiseBank::NoiseBank(int octaves, int resolution, std::uint64_t seed)
    : octaves_(octaves), resolution_(resolution), seed_(seed) {
  if (octaves < 1) throw std::invalid_argument("NoiseBank: octave count must be >= 1");
  if (resolution < 2) throw std::invalid_argument("NoiseBank: resolution must be >= 2");
  const std::size_t per_grid = static_cast<std::size_t>(resolution) * resolution * resolution;
  values_.resize(per_grid * octaves);
  Rng rng(seed);
  fill_normal(values_, rng);
}

std::span<const Real> NoiseBank::grid(int octave) const {
  if (octave < 0 || octave >= octaves_) throw std::out_of_range("NoiseBank: octave index");
  const std::size_t per_grid =
      static_cast<std::size_t>(resolution_) * resolution_ * resolution_;
  return {values_.data() + per_grid * octave, per_grid};
}

Real NoiseBank::at(int octave, int x, int y, int z) const {
  const auto g = grid(octave);
  return g[(static_cast<std::size_t>(z) * resolution_ + y) * resolution_ + x];
}

FrequencyTransforms FrequencyTransforms::identity(int n) {
  return {std::vector<Mat3>(n, Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1})};
}

FrequencyTransforms FrequencyTransforms::zeros(int n) {
  return {std::vector<Mat3>(n, Mat3{})};
}

FrequencyTransforms FrequencyTransforms::ladder(int n, Rng* rng) {
  FrequencyTransforms t = identity(n);
  std::normal_distribution<double> eps(0.0, 0.1);
  for (int i = 0; i < n; ++i) {
    const double s = std::exp2(-4.0 * i / n);
    for (int e = 0; e < 9; ++e) {
      const double base = (e % 4 == 0) ? 1.0 : 0.0;
      const double jitter = rng ? eps(*rng) : 0.0;
      t.matrices[i][e] = static_cast<Real>(s * (base + jitter));
    }
  }
  return t;
}

std::vector<Real> FrequencyTransforms::flatten() const {
  std::vector<Real> flat;
  flat.reserve(matrices.size() * 9);
  for (const Mat3& m : matrices) flat.insert(flat.end(), m.begin(), m.end());
  return flat;
}

FrequencyTransforms FrequencyTransforms::from_flat(std::span<const Real> flat) {
  if (flat.size() % 9 != 0)
    throw std::invalid_argument("FrequencyTransforms: flat size not a multiple of 9");
  FrequencyTransforms t;
  t.matrices.resize(flat.size() / 9);
  for (std::size_t i = 0; i < t.matrices.size(); ++i)
    for (int e = 0; e < 9; ++e) t.matrices[i][e] = flat[i * 9 + e];
  return t;
}

namespace {

inline int wrap(long long i, int r) {
  long long m = i % r;
  return static_cast<int>(m < 0 ? m + r : m);
}

struct Cell {
  int x0, x1, y0, y1, z0, z1;
  Real fx, fy, fz;
};

inline Cell locate(Vec3 p, int r) {
  if (!is_finite(p)) throw std::invalid_argument("trilinear_sample: non-finite coordinate");
  const Real flx = std::floor(p.x), fly = std::floor(p.y), flz = std::floor(p.z);
  const auto ix = static_cast<long long>(flx);
  const auto iy = static_cast<long long>(fly);
  const auto iz = static_cast<long long>(flz);
  return {wrap(ix, r), wrap(ix + 1, r), wrap(iy, r), wrap(iy + 1, r),
          wrap(iz, r), wrap(iz + 1, r), p.x - flx, p.y - fly, p.z - flz};
}

}  // namespace

Real trilinear_sample(std::span<const Real> grid, int r, Vec3 p) {
  const Cell c = locate(p, r);
  auto v = [&](int x, int y, int z) {
    return grid[(static_cast<std::size_t>(z) * r + y) * r + x];
  };
  const Real gx = 1 - c.fx, gy = 1 - c.fy, gz = 1 - c.fz;
  const Real c00 = v(c.x0, c.y0, c.z0) * gx + v(c.x1, c.y0, c.z0) * c.fx;
  const Real c10 = v(c.x0, c.y1, c.z0) * gx + v(c.x1, c.y1, c.z0) * c.fx;
  const Real c01 = v(c.x0, c.y0, c.z1) * gx + v(c.x1, c.y0, c.z1) * c.fx;
  const Real c11 = v(c.x0, c.y1, c.z1) * gx + v(c.x1, c.y1, c.z1) * c.fx;
  const Real c0 = c00 * gy + c10 * c.fy;
  const Real c1 = c01 * gy + c11 * c.fy;
  return c0 * gz + c1 * c.fz;
}

Real trilinear_sample_grad(std::span<const Real> grid, int r, Vec3 p, Vec3& gradient) {
  const Cell c = locate(p, r);
  auto v = [&](int x, int y, int z) {
    return grid[(static_cast<std::size_t>(z) * r + y) * r + x];
  };
  const Real v000 = v(c.x0, c.y0, c.z0), v100 = v(c.x1, c.y0, c.z0);
  const Real v010 = v(c.x0, c.y1, c.z0), v110 = v(c.x1, c.y1, c.z0);
  const Real v001 = v(c.x0, c.y0, c.z1), v101 = v(c.x1, c.y0, c.z1);
  const Real v011 = v(c.x0, c.y1, c.z1), v111 = v(c.x1, c.y1, c.z1);
  const Real gx = 1 - c.fx, gy = 1 - c.fy, gz = 1 - c.fz;

  const Real c00 = v000 * gx + v100 * c.fx;
  const Real c10 = v010 * gx + v110 * c.fx;
  const Real c01 = v001 * gx + v101 * c.fx;
  const Real c11 = v011 * gx + v111 * c.fx;
  const Real c0 = c00 * gy + c10 * c.fy;
  const Real c1 = c01 * gy + c11 * c.fy;

  const Real dx00 = v100 - v000, dx10 = v110 - v010, dx01 = v101 - v001, dx11 = v111 - v011;
  gradient.x = (dx00 * gy + dx10 * c.fy) * gz + (dx01 * gy + dx11 * c.fy) * c.fz;
  gradient.y = (c10 - c00) * gz + (c11 - c01) * c.fz;
  gradient.z = c1 - c0;
  return c0 * gz + c1 * c.fz;
}

std::vector<Real> eval_noise_vector(Vec3 c, const FrequencyTransforms& transforms,
                                    const NoiseBank& bank) {
  std::vector<Real> out(bank.octaves());
  eval_noise_batch({&c, 1}, transforms, bank, out);
  return out;
}

void eval_noise_batch(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                      const NoiseBank& bank, std::span<Real> out) {
  const int n = bank.octaves();
  if (transforms.octaves() != n)
    throw std::invalid_argument("eval_noise: " + std::to_string(transforms.octaves()) +
                                " transforms for " + std::to_string(n) + " noise grids");
  if (out.size() != coords.size() * n)
    throw std::invalid_argument("eval_noise: output size mismatch");
  const int r = bank.resolution();
  const Real scale = world_to_grid(bank);
  for (int i = 0; i < n; ++i) {
    const auto grid = bank.grid(i);
    const Mat3& t = transforms.matrices[i];
    for (std::size_t p = 0; p < coords.size(); ++p)
      out[p * n + i] = trilinear_sample(grid, r, scale * apply(t, coords[p]));
  }
}

void eval_noise_backward(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                         const NoiseBank& bank, std::span<const Real> d_eta,
                         std::span<Real> d_transforms) {
  const int n = bank.octaves();
  if (transforms.octaves() != n || d_transforms.size() != static_cast<std::size_t>(n) * 9 ||
      d_eta.size() != coords.size() * n)
    throw std::invalid_argument("eval_noise_backward: size mismatch");
  const int r = bank.resolution();
  const Real scale = world_to_grid(bank);
  for (int i = 0; i < n; ++i) {
    const auto grid = bank.grid(i);
    const Mat3& t = transforms.matrices[i];
    double acc[9] = {};
    for (std::size_t p = 0; p < coords.size(); ++p) {
      const Real g = d_eta[p * n + i];
      if (g == 0) continue;
      const Vec3 c = coords[p];
      Vec3 grad;
      trilinear_sample_grad(grid, r, scale * apply(t, c), grad);
      // d eta / d T[a][b] = scale * grad[a] * c[b]
      for (int a = 0; a < 3; ++a) {
        const double ga = static_cast<double>(g) * scale * grad[a];
        acc[a * 3 + 0] += ga * c.x;
        acc[a * 3 + 1] += ga * c.y;
        acc[a * 3 + 2] += ga * c.z;
      }
    }
    for (int e = 0; e < 9; ++e) d_transforms[i * 9 + e] += static_cast<Real>(acc[e]);
  }
}

}  // namespace gramgan
