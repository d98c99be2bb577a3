#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gramgan/param.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan {

using Rng = std::mt19937_64;

/// Slope of the leaky rectifier used by every network in the project.
inline constexpr Real kLeakySlope = Real(0.2);

inline Real lrelu(Real x) { return x > 0 ? x : kLeakySlope * x; }
inline Real lrelu_slope(Real pre) { return pre > 0 ? Real(1) : kLeakySlope; }

void fill_normal(std::span<Real> values, Rng& rng, double stddev = 1.0);

/// Fully connected layer with equalized learning rate: the stored weight is
/// unit-normal and multiplied by sqrt(2 / fan_in) at every use.
class Dense {
 public:
  Dense() = default;
  /// Unit-normal weights when rng is given, zero weights otherwise. Bias 0.
  Dense(const std::string& name, int in, int out, Rng* rng);

  int in() const { return in_; }
  int out() const { return out_; }
  Real scale() const { return scale_; }

  /// y[rows x out] = scale * x[rows x in] * W^T + b
  void forward(std::span<const Real> x, int rows, std::span<Real> y) const;
  /// Same without the bias term; used for tangent propagation.
  void forward_linear(std::span<const Real> x, int rows, std::span<Real> y) const;
  /// Accumulates dW and db; writes dx when it is non-empty.
  void backward(std::span<const Real> x, std::span<const Real> dy, int rows,
                std::span<Real> dx);
  /// dx only, no parameter gradients.
  void backward_input(std::span<const Real> dy, int rows, std::span<Real> dx) const;
  /// Accumulates dW = scale * dy^T x only.
  void accumulate_weight_grad(std::span<const Real> x, std::span<const Real> dy, int rows);

  Param weight;
  Param bias;

 private:
  int in_ = 0;
  int out_ = 0;
  Real scale_ = 1;
};

/// 2D convolution, stride 1, "same" padding (pad before = (k-1)/2, after =
/// k-1-before), equalized learning rate. Operates on a single CHW sample.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, Rng* rng);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  Real scale() const { return scale_; }

  void forward(const Real* x, int h, int w, Real* y, std::vector<Real>& col) const;
  void forward_linear(const Real* x, int h, int w, Real* y, std::vector<Real>& col) const;
  /// Accumulates weight and bias gradients; writes dx when non-null.
  void backward(const Real* x, const Real* dy, int h, int w, Real* dx,
                std::vector<Real>& col);
  void backward_input(const Real* dy, int h, int w, Real* dx, std::vector<Real>& col) const;
  void accumulate_weight_grad(const Real* x, const Real* dy, int h, int w,
                              std::vector<Real>& col);

  Param weight;  // out x (in * k * k)
  Param bias;

 private:
  void im2col(const Real* x, int h, int w, std::vector<Real>& col) const;
  void col2im(const std::vector<Real>& col, int h, int w, Real* dx) const;

  int in_ = 0;
  int out_ = 0;
  int k_ = 0;
  int pad_ = 0;
  Real scale_ = 1;
};

/// 2x2 average pooling with stride 2 on a CHW sample.
void avg_pool2(const Real* x, int c, int h, int w, Real* y);
void avg_pool2_backward(const Real* dy, int c, int h, int w, Real* dx);

}  // namespace gramgan
