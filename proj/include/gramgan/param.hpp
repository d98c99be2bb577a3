#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gramgan/tensor.hpp"

namespace gramgan {

/// A named trainable array together with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> value;
  std::vector<Real> grad;

  Param() = default;
  Param(std::string name_, std::vector<int> shape_, Real fill = Real(0));

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

using ParamList = std::vector<Param*>;
using ConstParamList = std::vector<const Param*>;

void zero_grads(const ParamList& params);

/// Runtime multiplier sqrt(2 / fan_in) applied to unit-normal weights.
Real equalized_parameter_scale(int fan_in);

/// 64-bit FNV-1a over the raw bytes of every parameter value, in order.
std::uint64_t fingerprint(const ConstParamList& params);
std::uint64_t fingerprint(const Param& param);

/// Adam with per-parameter moments keyed by parameter name.
class Adam {
 public:
  struct Settings {
    double lr = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Settings s) : settings_(s) {}

  /// Applies one update to every parameter using its accumulated grad.
  void step(const ParamList& params);

  const Settings& settings() const { return settings_; }
  void set_lr(double lr) { settings_.lr = lr; }
  std::int64_t steps() const { return steps_; }

  struct Moments {
    std::vector<Real> m;
    std::vector<Real> v;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::int64_t steps, std::map<std::string, Moments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  Settings settings_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Plain gradient descent, used by the adaptation fidelity flag.
void sgd_step(const ParamList& params, double lr);

}  // namespace gramgan
