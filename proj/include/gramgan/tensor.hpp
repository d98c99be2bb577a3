#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gramgan {

// The library is built twice: float for training and inference, double for
// gradient verification.
#ifdef GRAMGAN_USE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

/// Dense NCHW tensor. Images, feature maps and point batches all use it.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, Real fill = Real(0))
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw std::invalid_argument("Tensor: negative dimension");
  }

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  int pixels() const { return h * w; }

  Real* sample(int i) { return data.data() + i * sample_size(); }
  const Real* sample(int i) const { return data.data() + i * sample_size(); }
  std::span<Real> sample_span(int i) { return {sample(i), sample_size()}; }
  std::span<const Real> sample_span(int i) const {
    return {sample(i), sample_size()};
  }

  Real& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  Real at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

/// World-space coordinate of the 3D texture field.
struct Vec3 {
  Real x = 0;
  Real y = 0;
  Real z = 0;

  Real operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Real s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Real dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline Real norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(Vec3 a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Row-major 3x3 matrix.
using Mat3 = std::array<Real, 9>;

inline Vec3 apply(const Mat3& m, Vec3 v) {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

struct Rgb {
  Real r = 0;
  Real g = 0;
  Real b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

}  // namespace gramgan
