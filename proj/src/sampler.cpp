#include "gramgan/sampler.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>
#include <string>

namespace gramgan {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using RowR = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using CRowMap = Eigen::Map<const RowR>;
using RowMap = Eigen::Map<RowR>;

constexpr int kChunk = 4096;
constexpr int kPanel = 16;

}  // namespace

Modulation Modulation::identity(int width) {
  Modulation m;
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    m.gamma[l].assign(width, Real(1));
    m.delta[l].assign(width, Real(0));
  }
  return m;
}

Sampler::Sampler(int octaves, int width, Rng& rng) : octaves_(octaves), width_(width) {
  if (octaves < kSamplerNoisyLayers || octaves % kSamplerNoisyLayers != 0)
    throw std::invalid_argument("Sampler: octave count " + std::to_string(octaves) +
                                " must be a positive multiple of 4");
  if (width < 1) throw std::invalid_argument("Sampler: width must be positive");
  w_scale_ = equalized_parameter_scale(width);
  a_scale_ = equalized_parameter_scale(bin_size());

  constant = Param("sampler.const", {width});
  fill_normal(constant.value, rng);
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    weights[l] = Param("sampler.W" + std::to_string(l), {width, width});
    fill_normal(weights[l].value, rng);
    biases[l] = Param("sampler.b" + std::to_string(l), {width});
  }
  for (int l = 0; l < kSamplerNoisyLayers; ++l) {
    injection[l] = Param("sampler.A" + std::to_string(l), {width, bin_size()});
    fill_normal(injection[l].value, rng);
  }
  out_weight = Param("sampler.Wout", {3, width});
  fill_normal(out_weight.value, rng);
  out_bias = Param("sampler.bout", {3});
}

ParamList Sampler::params() {
  ParamList list{&constant};
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    list.push_back(&weights[l]);
    list.push_back(&biases[l]);
  }
  for (auto& a : injection) list.push_back(&a);
  list.push_back(&out_weight);
  list.push_back(&out_bias);
  return list;
}

ConstParamList Sampler::params() const {
  auto list = const_cast<Sampler*>(this)->params();
  return {list.begin(), list.end()};
}

ParamList Sampler::injectors() {
  ParamList list;
  for (auto& a : injection) list.push_back(&a);
  return list;
}

struct Sampler::Workspace {
  std::array<MatR, kSamplerHiddenLayers> pre;
  std::array<MatR, kSamplerHiddenLayers> act;   // lrelu(pre)
  std::array<MatR, kSamplerHiddenLayers> out;   // after modulation
};

void Sampler::check_inputs(std::span<const Real> noise, int rows,
                           const Modulation* modulation) const {
  if (rows < 0) throw std::invalid_argument("Sampler: negative row count");
  if (noise.size() != static_cast<std::size_t>(rows) * octaves_)
    throw std::invalid_argument("Sampler: noise has " + std::to_string(noise.size()) +
                                " values, expected " + std::to_string(rows) + " x " +
                                std::to_string(octaves_));
  if (modulation) {
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      if (modulation->gamma[l].size() != static_cast<std::size_t>(width_) ||
          modulation->delta[l].size() != static_cast<std::size_t>(width_))
        throw std::invalid_argument("Sampler: modulation for hidden layer " +
                                    std::to_string(l) + " is missing or has wrong width");
    }
  }
}

void Sampler::run_forward(std::span<const Real> noise, int rows, const Modulation* modulation,
                          Workspace& ws) const {
  const int bin = bin_size();
  CMapR eta(noise.data(), rows, octaves_);
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    CMapR W(weights[l].value.data(), width_, width_);
    CRowMap b(biases[l].value.data(), width_);
    MatR& pre = ws.pre[l];
    if (l == 0) {
      CRowMap c(constant.value.data(), width_);
      RowR base = w_scale_ * (c * W.transpose()) + b;
      pre = base.replicate(rows, 1);
    } else {
      pre.noalias() = w_scale_ * (ws.out[l - 1] * W.transpose());
      pre.rowwise() += b;
    }
    if (l < kSamplerNoisyLayers) {
      CMapR A(injection[l].value.data(), width_, bin);
      pre.noalias() += a_scale_ * (eta.middleCols(l * bin, bin) * A.transpose());
    }
    ws.act[l] = pre.unaryExpr([](Real v) { return lrelu(v); });
    if (modulation) {
      CRowMap g(modulation->gamma[l].data(), width_);
      CRowMap d(modulation->delta[l].data(), width_);
      ws.out[l] = ws.act[l].array().rowwise() * g.array();
      ws.out[l].rowwise() += d;
    } else {
      ws.out[l] = ws.act[l];
    }
  }
}

void Sampler::forward_batch(std::span<const Real> noise, int rows, const Modulation* modulation,
                            std::span<Real> rgb, SamplerTrace* trace) const {
  check_inputs(noise, rows, modulation);
  if (rgb.size() != static_cast<std::size_t>(rows) * 3)
    throw std::invalid_argument("Sampler: rgb output size mismatch");
  if (trace)
    for (auto& a : trace->activations) a.assign(static_cast<std::size_t>(rows) * width_, 0);

  Workspace ws;
  CMapR Wout(out_weight.value.data(), 3, width_);
  CRowMap bout(out_bias.value.data(), 3);
  std::vector<Real> padded;
  MatR head;
  for (int start = 0; start < rows; start += kChunk) {
    const int count = std::min(kChunk, rows - start);
    auto chunk = noise.subspan(static_cast<std::size_t>(start) * octaves_,
                               static_cast<std::size_t>(count) * octaves_);
    // Eigen routes leftover columns of a matrix product through different
    // micro-kernels. Padding to whole panels keeps every row on the same
    // arithmetic path, so a row's result does not depend on the batch.
    const int full = (count + kPanel - 1) / kPanel * kPanel;
    if (full != count) {
      padded.assign(static_cast<std::size_t>(full) * octaves_, Real(0));
      std::copy(chunk.begin(), chunk.end(), padded.begin());
      chunk = padded;
    }
    run_forward(chunk, full, modulation, ws);
    head.noalias() = w_scale_ * (ws.out[kSamplerHiddenLayers - 1] * Wout.transpose());
    head.rowwise() += bout;
    MapR(rgb.data() + static_cast<std::size_t>(start) * 3, count, 3) = head.topRows(count);
    if (trace) {
      for (int l = 0; l < kSamplerHiddenLayers; ++l)
        MapR(trace->activations[l].data() + static_cast<std::size_t>(start) * width_, count,
             width_) = ws.out[l].topRows(count);
    }
  }
}

Rgb Sampler::forward(std::span<const Real> noise, const Modulation* modulation) const {
  Real rgb[3];
  forward_batch(noise, 1, modulation, rgb);
  return {rgb[0], rgb[1], rgb[2]};
}

void Sampler::backward_batch(std::span<const Real> noise, int rows, const Modulation* modulation,
                             std::span<const Real> d_rgb, std::span<Real> d_noise,
                             Modulation* d_modulation) {
  check_inputs(noise, rows, modulation);
  if (d_rgb.size() != static_cast<std::size_t>(rows) * 3)
    throw std::invalid_argument("Sampler: rgb gradient size mismatch");
  if (!d_noise.empty() && d_noise.size() != noise.size())
    throw std::invalid_argument("Sampler: noise gradient size mismatch");
  if (d_modulation && modulation) {
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      d_modulation->gamma[l].resize(width_, Real(0));
      d_modulation->delta[l].resize(width_, Real(0));
    }
  }

  const int bin = bin_size();
  Workspace ws;
  CMapR Wout(out_weight.value.data(), 3, width_);
  MapR dWout(out_weight.grad.data(), 3, width_);
  RowMap dbout(out_bias.grad.data(), 3);
  MatR d_h, d_pre;

  for (int start = 0; start < rows; start += kChunk) {
    const int count = std::min(kChunk, rows - start);
    const auto chunk_noise = noise.subspan(static_cast<std::size_t>(start) * octaves_,
                                           static_cast<std::size_t>(count) * octaves_);
    run_forward(chunk_noise, count, modulation, ws);
    CMapR eta(chunk_noise.data(), count, octaves_);
    CMapR dout(d_rgb.data() + static_cast<std::size_t>(start) * 3, count, 3);

    dWout.noalias() += w_scale_ * (dout.transpose() * ws.out[kSamplerHiddenLayers - 1]);
    dbout += dout.colwise().sum();
    d_h.noalias() = w_scale_ * (dout * Wout);

    for (int l = kSamplerHiddenLayers - 1; l >= 0; --l) {
      if (modulation) {
        CRowMap g(modulation->gamma[l].data(), width_);
        if (d_modulation) {
          RowMap dg(d_modulation->gamma[l].data(), width_);
          RowMap dd(d_modulation->delta[l].data(), width_);
          dg += (d_h.array() * ws.act[l].array()).colwise().sum().matrix();
          dd += d_h.colwise().sum();
        }
        d_pre = d_h.array().rowwise() * g.array();
      } else {
        d_pre = d_h;
      }
      d_pre.array() *= ws.pre[l].array().unaryExpr([](Real v) { return lrelu_slope(v); });

      CMapR W(weights[l].value.data(), width_, width_);
      MapR dW(weights[l].grad.data(), width_, width_);
      RowMap db(biases[l].grad.data(), width_);
      const RowR dpre_sum = d_pre.colwise().sum();
      db += dpre_sum;
      if (l == 0) {
        CRowMap c(constant.value.data(), width_);
        dW.noalias() += w_scale_ * (dpre_sum.transpose() * c);
        RowMap dc(constant.grad.data(), width_);
        dc.noalias() += w_scale_ * (dpre_sum * W);
      } else {
        dW.noalias() += w_scale_ * (d_pre.transpose() * ws.out[l - 1]);
      }
      if (l < kSamplerNoisyLayers) {
        CMapR A(injection[l].value.data(), width_, bin);
        MapR dA(injection[l].grad.data(), width_, bin);
        dA.noalias() += a_scale_ * (d_pre.transpose() * eta.middleCols(l * bin, bin));
        if (!d_noise.empty()) {
          MapR deta(d_noise.data() + static_cast<std::size_t>(start) * octaves_, count,
                    octaves_);
          deta.middleCols(l * bin, bin).noalias() = a_scale_ * (d_pre * A);
        }
      }
      if (l > 0) d_h.noalias() = w_scale_ * (d_pre * W);
    }
  }
}

void evaluate_texture(std::span<const Vec3> coords, const FrequencyTransforms& transforms,
                      const NoiseBank& bank, const Sampler& sampler,
                      const Modulation* modulation, std::span<Real> rgb) {
  const int n = bank.octaves();
  if (sampler.octaves() != n)
    throw std::invalid_argument("evaluate_texture: sampler expects " +
                                std::to_string(sampler.octaves()) + " octaves, bank has " +
                                std::to_string(n));
  if (rgb.size() != coords.size() * 3)
    throw std::invalid_argument("evaluate_texture: output size mismatch");
  std::vector<Real> eta;
  for (std::size_t start = 0; start < coords.size(); start += kChunk) {
    const std::size_t count = std::min<std::size_t>(kChunk, coords.size() - start);
    eta.resize(count * n);
    eval_noise_batch(coords.subspan(start, count), transforms, bank, eta);
    sampler.forward_batch(eta, static_cast<int>(count), modulation,
                          rgb.subspan(start * 3, count * 3));
  }
}

std::vector<Rgb> evaluate_texture(std::span<const Vec3> coords,
                                  const FrequencyTransforms& transforms, const NoiseBank& bank,
                                  const Sampler& sampler, const Modulation* modulation) {
  std::vector<Real> flat(coords.size() * 3);
  evaluate_texture(coords, transforms, bank, sampler, modulation, flat);
  std::vector<Rgb> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    out[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return out;
}

}  // namespace gramgan
