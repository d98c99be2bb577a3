#include "gramgan/param.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace gramgan {

Param::Param(std::string name_, std::vector<int> shape_, Real fill)
    : name(std::move(name_)), shape(std::move(shape_)) {
  std::size_t count = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Param " + name + ": negative dimension");
    count *= static_cast<std::size_t>(d);
  }
  value.assign(count, fill);
  grad.assign(count, Real(0));
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

Real equalized_parameter_scale(int fan_in) {
  if (fan_in <= 0) throw std::invalid_argument("equalized_parameter_scale: fan_in must be positive");
  return static_cast<Real>(std::sqrt(2.0 / fan_in));
}

namespace {

void fnv_mix(std::uint64_t& h, const void* bytes, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;

}  // namespace

std::uint64_t fingerprint(const Param& param) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, param.name.data(), param.name.size());
  fnv_mix(h, param.value.data(), param.value.size() * sizeof(Real));
  return h;
}

std::uint64_t fingerprint(const ConstParamList& params) {
  std::uint64_t h = kFnvOffset;
  for (const Param* p : params) {
    std::uint64_t ph = fingerprint(*p);
    fnv_mix(h, &ph, sizeof(ph));
  }
  return h;
}

void Adam::step(const ParamList& params) {
  ++steps_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (Param* p : params) {
    auto& mom = moments_[p->name];
    if (mom.m.size() != p->size()) {
      mom.m.assign(p->size(), Real(0));
      mom.v.assign(p->size(), Real(0));
    }
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      const double m = b1 * mom.m[i] + (1.0 - b1) * g;
      const double v = b2 * mom.v[i] + (1.0 - b2) * g * g;
      mom.m[i] = static_cast<Real>(m);
      mom.v[i] = static_cast<Real>(v);
      const double update = settings_.lr * (m / c1) / (std::sqrt(v / c2) + settings_.eps);
      p->value[i] = static_cast<Real>(p->value[i] - update);
    }
  }
}

void sgd_step(const ParamList& params, double lr) {
  for (Param* p : params)
    for (std::size_t i = 0; i < p->size(); ++i)
      p->value[i] = static_cast<Real>(p->value[i] - lr * p->grad[i]);
}

}  // namespace gramgan
