#include "gramgan/conditioning.hpp"

#include <stdexcept>
#include <string>

namespace gramgan {

namespace {

std::vector<Real> leaky(std::vector<Real> v) {
  for (Real& x : v) x = lrelu(x);
  return v;
}

std::vector<Real> times_slope(std::vector<Real> grad, const std::vector<Real>& pre) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= lrelu_slope(pre[i]);
  return grad;
}

std::vector<Real> run(const Dense& d, std::span<const Real> x, int rows) {
  std::vector<Real> y(static_cast<std::size_t>(rows) * d.out());
  d.forward(x, rows, y);
  return y;
}

}  // namespace

Tensor normalize_patch(const Tensor& patch) {
  Tensor out = patch;
  for (Real& v : out.data) v = Real(2) * v - Real(1);
  return out;
}

ConditioningNets::ConditioningNets(const ConditioningShape& shape, Rng& rng) : shape_(shape) {
  if (shape.octaves < 4 || shape.octaves % 4 != 0)
    throw std::invalid_argument("ConditioningNets: octave count must be a multiple of 4");
  encoder = ConvStack("encoder",
                      ConvStackArch::encoder(shape.patch_size, shape.latent_dim,
                                             shape.encoder_width_divisor),
                      &rng);
  q_hidden = Dense("qmap.hidden", shape.latent_dim, kMappingWidth, &rng);
  q_out = Dense("qmap.out", kMappingWidth, 9 * shape.octaves, nullptr);
  const auto ladder = FrequencyTransforms::ladder(shape.octaves, &rng).flatten();
  std::copy(ladder.begin(), ladder.end(), q_out.bias.value.begin());

  f_hidden = Dense("style.hidden", shape.latent_dim, kMappingWidth, &rng);
  f_out = Dense("style.out", kMappingWidth, kMappingWidth, &rng);

  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    affine[l] = Dense("affine.l" + std::to_string(l), kMappingWidth, 2 * shape.sampler_width,
                      nullptr);
    std::fill(affine[l].bias.value.begin(),
              affine[l].bias.value.begin() + shape.sampler_width, Real(1));
  }
}

ParamList ConditioningNets::params() {
  ParamList list = encoder.params();
  for (Dense* d : {&q_hidden, &q_out, &f_hidden, &f_out}) {
    list.push_back(&d->weight);
    list.push_back(&d->bias);
  }
  for (auto& d : affine) {
    list.push_back(&d.weight);
    list.push_back(&d.bias);
  }
  return list;
}

ConstParamList ConditioningNets::params() const {
  auto list = const_cast<ConditioningNets*>(this)->params();
  return {list.begin(), list.end()};
}

void ConditioningNets::check_latent(std::span<const Real> z, int rows) const {
  if (z.size() != static_cast<std::size_t>(rows) * shape_.latent_dim)
    throw std::invalid_argument("conditioning: latent code has " + std::to_string(z.size()) +
                                " values, expected " + std::to_string(shape_.latent_dim));
}

std::vector<Real> ConditioningNets::encode(const Tensor& patch, ConvStack::Tape* tape) const {
  if (patch.c != 3 || patch.h != shape_.patch_size || patch.w != shape_.patch_size)
    throw std::invalid_argument("encode: expected [n x 3 x " + std::to_string(shape_.patch_size) +
                                " x " + std::to_string(shape_.patch_size) + "] patch, got " +
                                patch.shape_string());
  return encoder.forward(normalize_patch(patch), tape).data;
}

FrequencyTransforms ConditioningNets::map_transforms(std::span<const Real> z) const {
  check_latent(z, 1);
  const auto hidden = leaky(run(q_hidden, z, 1));
  return FrequencyTransforms::from_flat(run(q_out, hidden, 1));
}

std::vector<Real> ConditioningNets::style(std::span<const Real> z) const {
  check_latent(z, 1);
  const auto hidden = leaky(run(f_hidden, z, 1));
  return run(f_out, hidden, 1);
}

std::pair<std::vector<Real>, std::vector<Real>> ConditioningNets::layer_affine(
    std::span<const Real> w, int layer) const {
  if (layer < 0 || layer >= kSamplerHiddenLayers)
    throw std::invalid_argument("layer_affine: layer index " + std::to_string(layer));
  if (w.size() != static_cast<std::size_t>(kMappingWidth))
    throw std::invalid_argument("layer_affine: style vector must have 128 values");
  const auto out = run(affine[layer], w, 1);
  const auto mid = out.begin() + shape_.sampler_width;
  return {std::vector<Real>(out.begin(), mid), std::vector<Real>(mid, out.end())};
}

ConditionState ConditioningNets::assemble(std::span<const Real> q_out_row,
                                          std::span<const Real> w_row) const {
  ConditionState s;
  s.w.assign(w_row.begin(), w_row.end());
  s.transforms = FrequencyTransforms::from_flat(q_out_row);
  for (int l = 0; l < kSamplerHiddenLayers; ++l)
    std::tie(s.modulation.gamma[l], s.modulation.delta[l]) = layer_affine(w_row, l);
  return s;
}

ConditionState ConditioningNets::state_from_latent(std::span<const Real> z) const {
  check_latent(z, 1);
  const auto q_row = run(q_out, leaky(run(q_hidden, z, 1)), 1);
  const auto w_row = run(f_out, leaky(run(f_hidden, z, 1)), 1);
  ConditionState s = assemble(q_row, w_row);
  s.z.assign(z.begin(), z.end());
  return s;
}

ConditionState ConditioningNets::condition(const Tensor& patch) const {
  if (patch.n != 1) throw std::invalid_argument("condition: expected a single patch");
  return state_from_latent(encode(patch));
}

std::vector<ConditionState> ConditioningNets::forward(const Tensor& patches, Tape& tape) const {
  const int b = patches.n;
  tape.batch = b;
  tape.z = encode(patches, &tape.encoder);
  tape.q_pre = run(q_hidden, tape.z, b);
  tape.q_act = leaky(tape.q_pre);
  const auto q_rows = run(q_out, tape.q_act, b);
  tape.f_pre = run(f_hidden, tape.z, b);
  tape.f_act = leaky(tape.f_pre);
  tape.w = run(f_out, tape.f_act, b);

  const int n9 = 9 * shape_.octaves;
  const int latent = shape_.latent_dim;
  std::vector<ConditionState> states;
  for (int i = 0; i < b; ++i) {
    ConditionState s = assemble(std::span(q_rows).subspan(i * n9, n9),
                                std::span(tape.w).subspan(i * kMappingWidth, kMappingWidth));
    s.z.assign(tape.z.begin() + i * latent, tape.z.begin() + (i + 1) * latent);
    states.push_back(std::move(s));
  }
  return states;
}

void ConditioningNets::backward(const Tape& tape, const StateGrads& grads) {
  const int b = tape.batch;
  const int width = shape_.sampler_width;
  const int latent = shape_.latent_dim;
  if (grads.transforms.size() != static_cast<std::size_t>(b) * 9 * shape_.octaves ||
      grads.modulation.size() != static_cast<std::size_t>(b))
    throw std::invalid_argument("ConditioningNets::backward: gradient batch mismatch");

  std::vector<Real> dz(static_cast<std::size_t>(b) * latent, Real(0));
  std::vector<Real> dz_part(dz.size());

  // Q branch
  std::vector<Real> d_q_act(static_cast<std::size_t>(b) * kMappingWidth);
  q_out.backward(tape.q_act, grads.transforms, b, d_q_act);
  q_hidden.backward(tape.z, times_slope(std::move(d_q_act), tape.q_pre), b, dz_part);
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += dz_part[i];

  // affine heads -> style vector
  std::vector<Real> dw(static_cast<std::size_t>(b) * kMappingWidth, Real(0));
  std::vector<Real> dw_part(dw.size());
  std::vector<Real> d_affine(static_cast<std::size_t>(b) * 2 * width);
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    for (int i = 0; i < b; ++i) {
      const Modulation& m = grads.modulation[i];
      Real* row = d_affine.data() + static_cast<std::size_t>(i) * 2 * width;
      for (int k = 0; k < width; ++k) {
        row[k] = m.gamma[l].empty() ? Real(0) : m.gamma[l][k];
        row[width + k] = m.delta[l].empty() ? Real(0) : m.delta[l][k];
      }
    }
    affine[l].backward(tape.w, d_affine, b, dw_part);
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += dw_part[i];
  }

  // style network
  std::vector<Real> d_f_act(static_cast<std::size_t>(b) * kMappingWidth);
  f_out.backward(tape.f_act, dw, b, d_f_act);
  f_hidden.backward(tape.z, times_slope(std::move(d_f_act), tape.f_pre), b, dz_part);
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += dz_part[i];

  Tensor d_out(b, latent, 1, 1);
  d_out.data = std::move(dz);
  encoder.backward(tape.encoder, d_out, nullptr, true, false);
}

}  // namespace gramgan
