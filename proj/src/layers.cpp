#include "gramgan/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace gramgan {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

void check_span(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": size " + std::to_string(got) +
                                ", expected " + std::to_string(want));
}

}  // namespace

void fill_normal(std::span<Real> values, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Real& v : values) v = static_cast<Real>(dist(rng));
}

// ---------------------------------------------------------------- Dense

Dense::Dense(const std::string& name, int in, int out, Rng* rng)
    : weight(name + ".w", {out, in}), bias(name + ".b", {out}), in_(in), out_(out),
      scale_(equalized_parameter_scale(in)) {
  if (rng) fill_normal(weight.value, *rng);
}

void Dense::forward(std::span<const Real> x, int rows, std::span<Real> y) const {
  forward_linear(x, rows, y);
  MapR Y(y.data(), rows, out_);
  Y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias.value.data(), out_);
}

void Dense::forward_linear(std::span<const Real> x, int rows, std::span<Real> y) const {
  check_span(x.size(), static_cast<std::size_t>(rows) * in_, "Dense input");
  check_span(y.size(), static_cast<std::size_t>(rows) * out_, "Dense output");
  CMapR X(x.data(), rows, in_);
  CMapR W(weight.value.data(), out_, in_);
  MapR Y(y.data(), rows, out_);
  Y.noalias() = scale_ * (X * W.transpose());
}

void Dense::backward(std::span<const Real> x, std::span<const Real> dy, int rows,
                     std::span<Real> dx) {
  accumulate_weight_grad(x, dy, rows);
  // Plain loops: Eigen reductions over mapped buffers pick their summation
  // order from the pointer alignment, which breaks run-to-run determinism.
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out_; ++o) bias.grad[o] += dy[static_cast<std::size_t>(r) * out_ + o];
  if (!dx.empty()) backward_input(dy, rows, dx);
}

void Dense::backward_input(std::span<const Real> dy, int rows, std::span<Real> dx) const {
  check_span(dy.size(), static_cast<std::size_t>(rows) * out_, "Dense grad");
  check_span(dx.size(), static_cast<std::size_t>(rows) * in_, "Dense input grad");
  CMapR dY(dy.data(), rows, out_);
  CMapR W(weight.value.data(), out_, in_);
  MapR dX(dx.data(), rows, in_);
  dX.noalias() = scale_ * (dY * W);
}

void Dense::accumulate_weight_grad(std::span<const Real> x, std::span<const Real> dy, int rows) {
  check_span(x.size(), static_cast<std::size_t>(rows) * in_, "Dense input");
  check_span(dy.size(), static_cast<std::size_t>(rows) * out_, "Dense grad");
  CMapR X(x.data(), rows, in_);
  CMapR dY(dy.data(), rows, out_);
  MapR dW(weight.grad.data(), out_, in_);
  dW.noalias() += scale_ * (dY.transpose() * X);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, Rng* rng)
    : weight(name + ".w", {out_channels, in_channels * kernel * kernel}),
      bias(name + ".b", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      pad_((kernel - 1) / 2),
      scale_(equalized_parameter_scale(in_channels * kernel * kernel)) {
  if (kernel < 1) throw std::invalid_argument("Conv2d: kernel must be >= 1");
  if (rng) fill_normal(weight.value, *rng);
}

void Conv2d::im2col(const Real* x, int h, int w, std::vector<Real>& col) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  col.resize(static_cast<std::size_t>(in_) * k_ * k_ * hw);
  Real* dst = col.data();
  for (int c = 0; c < in_; ++c) {
    const Real* src = x + c * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx, dst += hw) {
        const int dx = kx - pad_;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          Real* row = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pad_;
          if (sy < 0 || sy >= h || x_lo >= x_hi) {
            std::fill(row, row + w, Real(0));
            continue;
          }
          std::fill(row, row + x_lo, Real(0));
          std::memcpy(row + x_lo, src + static_cast<std::size_t>(sy) * w + x_lo + dx,
                      sizeof(Real) * (x_hi - x_lo));
          std::fill(row + x_hi, row + w, Real(0));
        }
      }
    }
  }
}

void Conv2d::col2im(const std::vector<Real>& col, int h, int w, Real* dx) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::fill(dx, dx + in_ * hw, Real(0));
  const Real* src = col.data();
  for (int c = 0; c < in_; ++c) {
    Real* dst = dx + c * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx, src += hw) {
        const int ox = kx - pad_;
        const int x_lo = std::max(0, -ox);
        const int x_hi = std::min(w, w - ox);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad_;
          if (sy < 0 || sy >= h) continue;
          const Real* row = src + static_cast<std::size_t>(y) * w;
          Real* out = dst + static_cast<std::size_t>(sy) * w + ox;
          for (int x = x_lo; x < x_hi; ++x) out[x] += row[x];
        }
      }
    }
  }
}

void Conv2d::forward_linear(const Real* x, int h, int w, Real* y, std::vector<Real>& col) const {
  const int hw = h * w;
  const int kk = in_ * k_ * k_;
  im2col(x, h, w, col);
  CMapR W(weight.value.data(), out_, kk);
  CMapR C(col.data(), kk, hw);
  MapR Y(y, out_, hw);
  Y.noalias() = scale_ * (W * C);
}

void Conv2d::forward(const Real* x, int h, int w, Real* y, std::vector<Real>& col) const {
  forward_linear(x, h, w, y, col);
  MapR Y(y, out_, h * w);
  Y.colwise() += Eigen::Map<const VecR>(bias.value.data(), out_);
}

void Conv2d::backward(const Real* x, const Real* dy, int h, int w, Real* dx,
                      std::vector<Real>& col) {
  accumulate_weight_grad(x, dy, h, w, col);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < out_; ++o) {
    Real acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += dy[o * hw + i];
    bias.grad[o] += acc;
  }
  if (dx) backward_input(dy, h, w, dx, col);
}

void Conv2d::backward_input(const Real* dy, int h, int w, Real* dx, std::vector<Real>& col) const {
  const int hw = h * w;
  const int kk = in_ * k_ * k_;
  col.resize(static_cast<std::size_t>(kk) * hw);
  CMapR W(weight.value.data(), out_, kk);
  CMapR dY(dy, out_, hw);
  MapR C(col.data(), kk, hw);
  C.noalias() = scale_ * (W.transpose() * dY);
  col2im(col, h, w, dx);
}

void Conv2d::accumulate_weight_grad(const Real* x, const Real* dy, int h, int w,
                                    std::vector<Real>& col) {
  const int hw = h * w;
  const int kk = in_ * k_ * k_;
  im2col(x, h, w, col);
  CMapR C(col.data(), kk, hw);
  CMapR dY(dy, out_, hw);
  MapR dW(weight.grad.data(), out_, kk);
  dW.noalias() += scale_ * (dY * C.transpose());
}

// ---------------------------------------------------------------- pooling

void avg_pool2(const Real* x, int c, int h, int w, Real* y) {
  if (h % 2 || w % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
  const int oh = h / 2, ow = w / 2;
  for (int ch = 0; ch < c; ++ch) {
    const Real* src = x + static_cast<std::size_t>(ch) * h * w;
    Real* dst = y + static_cast<std::size_t>(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const Real* r0 = src + static_cast<std::size_t>(2 * oy) * w;
      const Real* r1 = r0 + w;
      for (int ox = 0; ox < ow; ++ox)
        dst[oy * ow + ox] =
            Real(0.25) * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
    }
  }
}

void avg_pool2_backward(const Real* dy, int c, int h, int w, Real* dx) {
  const int oh = h / 2, ow = w / 2;
  for (int ch = 0; ch < c; ++ch) {
    const Real* src = dy + static_cast<std::size_t>(ch) * oh * ow;
    Real* dst = dx + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<std::size_t>(y) * w + x] = Real(0.25) * src[(y / 2) * ow + x / 2];
  }
}

}  // namespace gramgan
