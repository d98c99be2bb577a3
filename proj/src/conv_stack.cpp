#include "gramgan/conv_stack.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>
#include <string>

namespace gramgan {

namespace {

// (channels, kernel, pool) rows of the published critic and encoder tables.
const std::vector<ConvSpec> kCriticTable = {
    {32, 3, false},  {64, 3, true},  {64, 3, false}, {128, 3, true}, {128, 3, true},
    {256, 3, true},  {256, 3, true}, {256, 3, true}, {256, 2, true},
};
const std::vector<ConvSpec> kEncoderTable = {
    {32, 3, true},  {64, 3, true},  {128, 3, true}, {256, 3, true},
    {256, 3, true}, {256, 3, true}, {256, 2, true},
};

std::vector<ConvSpec> fit_table(const std::vector<ConvSpec>& table, int input_size,
                                int divisor) {
  if (input_size < 2 || !std::has_single_bit(static_cast<unsigned>(input_size)))
    throw std::invalid_argument("ConvStackArch: input size " + std::to_string(input_size) +
                                " must be a power of two >= 2");
  if (divisor < 1) throw std::invalid_argument("ConvStackArch: width divisor must be >= 1");
  const int pools = std::countr_zero(static_cast<unsigned>(input_size));
  std::vector<ConvSpec> out;
  int used = 0;
  for (std::size_t i = 0; i + 1 < table.size() && used < pools - 1; ++i) {
    out.push_back(table[i]);
    if (table[i].pool_after) ++used;
  }
  out.push_back(table.back());
  for (auto& s : out) s.out_channels = std::max(1, s.out_channels / divisor);
  return out;
}

Tensor slope_mask_multiply(const Tensor& grad, const Tensor& post) {
  Tensor out = grad;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= lrelu_slope(post.data[i]);
  return out;
}

}  // namespace

ConvStackArch ConvStackArch::critic(int input_size, int width_divisor) {
  ConvStackArch a;
  a.input_size = input_size;
  a.convs = fit_table(kCriticTable, input_size, width_divisor);
  a.dense = {std::max(1, 512 / width_divisor), 1};
  return a;
}

ConvStackArch ConvStackArch::encoder(int input_size, int latent_dim, int width_divisor) {
  ConvStackArch a;
  a.input_size = input_size;
  a.convs = fit_table(kEncoderTable, input_size, width_divisor);
  a.dense = {std::max(1, 256 / width_divisor), latent_dim};
  return a;
}

ConvStackArch ConvStackArch::sifid_features() {
  ConvStackArch a;
  a.input_size = 0;  // any even size
  a.convs = {{32, 3, false}, {64, 3, true}, {64, 3, false}};
  return a;
}

std::vector<int> ConvStackArch::conv_sizes() const {
  std::vector<int> sizes;
  int s = input_size;
  for (const auto& c : convs) {
    sizes.push_back(s);
    if (c.pool_after) s /= 2;
  }
  return sizes;
}

int ConvStackArch::flat_size() const {
  int s = input_size;
  for (const auto& c : convs)
    if (c.pool_after) s /= 2;
  const int ch = convs.empty() ? in_channels : convs.back().out_channels;
  return ch * s * s;
}

ConvStack::ConvStack(const std::string& prefix, ConvStackArch arch, Rng* rng)
    : arch_(std::move(arch)) {
  int ch = arch_.in_channels;
  for (std::size_t l = 0; l < arch_.convs.size(); ++l) {
    const auto& spec = arch_.convs[l];
    convs.emplace_back(prefix + ".conv" + std::to_string(l), ch, spec.out_channels, spec.kernel,
                       rng);
    ch = spec.out_channels;
  }
  if (!arch_.dense.empty()) {
    if (arch_.input_size <= 0)
      throw std::invalid_argument("ConvStack: a dense head needs a fixed input size");
    int in = arch_.flat_size();
    for (std::size_t j = 0; j < arch_.dense.size(); ++j) {
      dense.emplace_back(prefix + ".dense" + std::to_string(j), in, arch_.dense[j], rng);
      in = arch_.dense[j];
    }
  }
}

ParamList ConvStack::params() {
  ParamList list;
  for (auto& c : convs) {
    list.push_back(&c.weight);
    list.push_back(&c.bias);
  }
  for (auto& d : dense) {
    list.push_back(&d.weight);
    list.push_back(&d.bias);
  }
  return list;
}

ConstParamList ConvStack::params() const {
  auto list = const_cast<ConvStack*>(this)->params();
  return {list.begin(), list.end()};
}

void ConvStack::check_input(const Tensor& images) const {
  if (images.c != arch_.in_channels)
    throw std::invalid_argument("ConvStack: expected " + std::to_string(arch_.in_channels) +
                                " channels, got " + images.shape_string());
  if (images.h != images.w)
    throw std::invalid_argument("ConvStack: input must be square, got " + images.shape_string());
  if (arch_.input_size > 0 && images.h != arch_.input_size)
    throw std::invalid_argument("ConvStack: expected " + std::to_string(arch_.input_size) +
                                "^2 input, got " + images.shape_string());
  int s = images.h;
  for (const auto& c : arch_.convs) {
    if (c.pool_after) {
      if (s % 2) throw std::invalid_argument("ConvStack: input size not divisible by pooling");
      s /= 2;
    }
  }
}

Tensor ConvStack::forward(const Tensor& images, Tape* tape) const {
  check_input(images);
  const int n = images.n;
  std::vector<Real> col;
  Tensor x = images;
  if (tape) {
    tape->input_shape = Tensor(images.n, images.c, images.h, images.w);
    tape->input_shape.data.clear();
    tape->conv_in.clear();
    tape->conv_out.clear();
    tape->dense_in.clear();
    tape->dense_pre.clear();
  }
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const int s = x.h;
    Tensor y(n, convs[l].out_channels(), s, s);
    for (int i = 0; i < n; ++i) convs[l].forward(x.sample(i), s, s, y.sample(i), col);
    for (Real& v : y.data) v = lrelu(v);
    Tensor next;
    if (arch_.convs[l].pool_after) {
      next = Tensor(n, y.c, s / 2, s / 2);
      for (int i = 0; i < n; ++i) avg_pool2(y.sample(i), y.c, s, s, next.sample(i));
    }
    if (tape) {
      tape->conv_in.push_back(std::move(x));
      tape->conv_out.push_back(y);
    }
    x = arch_.convs[l].pool_after ? std::move(next) : std::move(y);
  }

  if (dense.empty()) {
    if (tape) tape->output = Tensor(n, 0, 1, 1);
    return Tensor(n, 0, 1, 1);
  }
  std::vector<Real> flat = std::move(x.data);
  for (std::size_t j = 0; j < dense.size(); ++j) {
    std::vector<Real> pre(static_cast<std::size_t>(n) * dense[j].out());
    dense[j].forward(flat, n, pre);
    if (tape) {
      tape->dense_in.push_back(flat);
      tape->dense_pre.push_back(pre);
    }
    if (j + 1 < dense.size())
      for (Real& v : pre) v = lrelu(v);
    flat = std::move(pre);
  }
  Tensor out(n, output_dim(), 1, 1);
  out.data = std::move(flat);
  if (tape) tape->output = out;
  return out;
}

Tensor ConvStack::backward(const Tape& tape, const Tensor& d_output,
                           const FeatureStack* d_features, bool accumulate_params,
                           bool want_input, Deltas* deltas) {
  return backward_impl(tape, d_output, d_features, accumulate_params ? this : nullptr,
                       want_input, deltas);
}

Tensor ConvStack::input_gradient_of_output(const Tape& tape, const Tensor& d_output) const {
  return backward_impl(tape, d_output, nullptr, nullptr, true, nullptr);
}

Tensor ConvStack::backward_impl(const Tape& tape, const Tensor& d_output,
                                const FeatureStack* d_features, ConvStack* sink,
                                bool want_input, Deltas* deltas) const {
  if (tape.conv_in.size() != convs.size())
    throw std::invalid_argument("ConvStack::backward: tape does not match this network");
  const int n = tape.input_shape.n;
  if (d_features && d_features->size() != convs.size())
    throw std::invalid_argument("ConvStack::backward: expected " +
                                std::to_string(convs.size()) + " feature gradients");
  if (deltas) {
    deltas->conv.assign(convs.size(), Tensor());
    deltas->dense.assign(dense.size(), {});
  }

  // Gradient with respect to the output of the last conv stage.
  Tensor d_stage = tape.input_shape;
  if (!convs.empty()) {
    const Tensor& last_out = tape.conv_out.back();
    const int s = arch_.convs.back().pool_after ? last_out.h / 2 : last_out.h;
    d_stage = Tensor(n, last_out.c, s, s);
  }
  if (!dense.empty()) {
    if (d_output.n != n || d_output.sample_size() != static_cast<std::size_t>(output_dim()))
      throw std::invalid_argument("ConvStack::backward: output gradient shape " +
                                  d_output.shape_string());
    std::vector<Real> d = d_output.data;
    for (int j = static_cast<int>(dense.size()) - 1; j >= 0; --j) {
      std::vector<Real> d_pre = d;
      if (j + 1 < static_cast<int>(dense.size()))
        for (std::size_t i = 0; i < d_pre.size(); ++i)
          d_pre[i] *= lrelu_slope(tape.dense_pre[j][i]);
      if (sink) sink->dense[j].backward(tape.dense_in[j], d_pre, n, {});
      d.assign(static_cast<std::size_t>(n) * dense[j].in(), Real(0));
      dense[j].backward_input(d_pre, n, d);
      if (deltas) deltas->dense[j] = std::move(d_pre);
    }
    d_stage.data = std::move(d);
  }

  std::vector<Real> col;
  for (int l = static_cast<int>(convs.size()) - 1; l >= 0; --l) {
    const Tensor& post = tape.conv_out[l];
    const int s = post.h;
    Tensor d_out;
    if (arch_.convs[l].pool_after) {
      d_out = Tensor(n, post.c, s, s);
      for (int i = 0; i < n; ++i)
        avg_pool2_backward(d_stage.sample(i), post.c, s, s, d_out.sample(i));
    } else {
      d_out = std::move(d_stage);
    }
    if (d_features && !(*d_features)[l].data.empty()) {
      const Tensor& df = (*d_features)[l];
      if (!df.same_shape(post))
        throw std::invalid_argument("ConvStack::backward: feature gradient " +
                                    std::to_string(l) + " has shape " + df.shape_string());
      for (std::size_t i = 0; i < d_out.data.size(); ++i) d_out.data[i] += df.data[i];
    }
    Tensor d_pre = slope_mask_multiply(d_out, post);
    if (sink)
      for (int i = 0; i < n; ++i)
        sink->convs[l].backward(tape.conv_in[l].sample(i), d_pre.sample(i), s, s, nullptr, col);
    if (l > 0 || want_input) {
      const Tensor& in = tape.conv_in[l];
      d_stage = Tensor(n, in.c, in.h, in.w);
      for (int i = 0; i < n; ++i)
        convs[l].backward_input(d_pre.sample(i), s, s, d_stage.sample(i), col);
    }
    if (deltas) deltas->conv[l] = std::move(d_pre);
  }
  return want_input ? d_stage : Tensor();
}

void ConvStack::accumulate_directional_grads(const Tape& tape, const Deltas& deltas,
                                             const Tensor& direction) {
  if (deltas.conv.size() != convs.size() || deltas.dense.size() != dense.size())
    throw std::invalid_argument("ConvStack: deltas do not match this network");
  const int n = direction.n;
  std::vector<Real> col;
  Tensor t = direction;
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const Tensor& post = tape.conv_out[l];
    const int s = post.h;
    if (!t.same_shape(tape.conv_in[l]))
      throw std::invalid_argument("ConvStack: direction shape " + t.shape_string());
    Tensor lin(n, post.c, s, s);
    for (int i = 0; i < n; ++i) {
      convs[l].accumulate_weight_grad(t.sample(i), deltas.conv[l].sample(i), s, s, col);
      convs[l].forward_linear(t.sample(i), s, s, lin.sample(i), col);
    }
    lin = slope_mask_multiply(lin, post);
    if (arch_.convs[l].pool_after) {
      t = Tensor(n, post.c, s / 2, s / 2);
      for (int i = 0; i < n; ++i) avg_pool2(lin.sample(i), post.c, s, s, t.sample(i));
    } else {
      t = std::move(lin);
    }
  }
  std::vector<Real> flat = std::move(t.data);
  for (std::size_t j = 0; j < dense.size(); ++j) {
    dense[j].accumulate_weight_grad(flat, deltas.dense[j], n);
    if (j + 1 == dense.size()) break;
    std::vector<Real> lin(static_cast<std::size_t>(n) * dense[j].out());
    dense[j].forward_linear(flat, n, lin);
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] *= lrelu_slope(tape.dense_pre[j][i]);
    flat = std::move(lin);
  }
}

FeatureStack ConvStack::extract(const Tensor& images, std::unique_ptr<FeatureTape>* tape) const {
  auto t = std::make_unique<Tape>();
  forward(images, t.get());
  FeatureStack features = t->conv_out;
  if (tape) *tape = std::move(t);
  return features;
}

Tensor ConvStack::input_gradient(const FeatureTape& tape, const FeatureStack& feature_grads) const {
  const auto* t = dynamic_cast<const Tape*>(&tape);
  if (!t) throw std::invalid_argument("ConvStack: foreign feature tape");
  const int n = t->input_shape.n;
  Tensor zero(n, output_dim(), 1, 1);
  return backward_impl(*t, zero, &feature_grads, nullptr, true, nullptr);
}

}  // namespace gramgan
