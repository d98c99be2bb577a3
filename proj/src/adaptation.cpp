#include "gramgan/adaptation.hpp"

#include <cmath>
#include <cstring>

#include "gramgan/errors.hpp"
#include "gramgan/trainer.hpp"
#include "records.hpp"

namespace gramgan {

namespace {

constexpr char kDeltaMagic[4] = {'G', 'G', 'A', 'D'};
constexpr std::uint32_t kDeltaVersion = 1;

// theta as optimizer parameters. The injectors live in a private copy of
// the sampler so its backward pass can fill their gradients directly.
struct ThetaParams {
  Param transforms;
  std::array<Param, kSamplerHiddenLayers> gamma;
  std::array<Param, kSamplerHiddenLayers> delta;
  Sampler sampler;

  ThetaParams(const AdaptableParams& theta, const Sampler& base) : sampler(base) {
    const int n = theta.transforms.octaves();
    transforms = Param("adapt.transforms", {n, 3, 3});
    transforms.value = theta.transforms.flatten();
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      const int width = static_cast<int>(theta.modulation.gamma[l].size());
      gamma[l] = Param("adapt.gamma." + std::to_string(l), {width});
      gamma[l].value = theta.modulation.gamma[l];
      delta[l] = Param("adapt.delta." + std::to_string(l), {width});
      delta[l].value = theta.modulation.delta[l];
    }
    for (int l = 0; l < kSamplerNoisyLayers; ++l) sampler.injection[l].value = theta.injectors[l];
  }

  ParamList list() {
    ParamList out{&transforms};
    for (auto& p : gamma) out.push_back(&p);
    for (auto& p : delta) out.push_back(&p);
    for (Param* p : sampler.injectors()) out.push_back(p);
    return out;
  }

  Modulation modulation() const {
    Modulation m;
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      m.gamma[l] = gamma[l].value;
      m.delta[l] = delta[l].value;
    }
    return m;
  }

  AdaptableParams snapshot(std::vector<Real> z) const {
    AdaptableParams t;
    t.z = std::move(z);
    t.transforms = FrequencyTransforms::from_flat(transforms.value);
    t.modulation = modulation();
    for (int l = 0; l < kSamplerNoisyLayers; ++l) t.injectors[l] = sampler.injection[l].value;
    return t;
  }
};

// L_style of slices rendered with theta. With grads set, d/dtheta is
// accumulated into the theta parameters.
double slice_style(const Model& model, ThetaParams& theta, const std::vector<SlicePlane>& planes,
                   const FeatureExtractor& extractor, const FeatureStack& real, bool grads) {
  const SliceSpec spec = model.slice_spec();
  const int px = spec.resolution * spec.resolution;
  const int n = model.config().octaves;
  const int count = static_cast<int>(planes.size());
  const FrequencyTransforms transforms = FrequencyTransforms::from_flat(theta.transforms.value);
  const Modulation mod = theta.modulation();

  Tensor fake(count, 3, spec.resolution, spec.resolution);
  std::vector<std::vector<Vec3>> coords(count);
  std::vector<std::vector<Real>> noise(count);
  std::vector<Real> rgb(static_cast<std::size_t>(px) * 3);
  for (int b = 0; b < count; ++b) {
    coords[b] = plane_to_coords(planes[b], spec);
    noise[b].resize(static_cast<std::size_t>(px) * n);
    eval_noise_batch(coords[b], transforms, model.bank, noise[b]);
    theta.sampler.forward_batch(noise[b], px, &mod, rgb);
    Real* dst = fake.sample(b);
    for (int p = 0; p < px; ++p)
      for (int ch = 0; ch < 3; ++ch) dst[ch * px + p] = Real(2) * rgb[p * 3 + ch] - Real(1);
  }

  std::unique_ptr<FeatureTape> tape;
  const FeatureStack features = extractor.extract(fake, grads ? &tape : nullptr);
  const bool l2 = model.config().style_distance == "l2";
  FeatureStack d_features;
  const StyleLossValue style =
      grads ? (l2 ? style_loss_l2(real, features, 1.0, d_features)
                  : style_loss(real, features, 1.0, d_features))
            : (l2 ? style_loss_l2(real, features) : style_loss(real, features));
  if (!std::isfinite(style.total)) throw TrainingError("adaptation: non-finite style loss");
  if (!grads) return style.total;

  const Tensor d_image = extractor.input_gradient(*tape, d_features);
  std::vector<Real> d_rgb(static_cast<std::size_t>(px) * 3);
  std::vector<Real> d_noise(static_cast<std::size_t>(px) * n);
  Modulation d_mod;
  for (int b = 0; b < count; ++b) {
    const Real* src = d_image.sample(b);
    for (int p = 0; p < px; ++p)
      for (int ch = 0; ch < 3; ++ch) d_rgb[p * 3 + ch] = Real(2) * src[ch * px + p];
    theta.sampler.backward_batch(noise[b], px, &mod, d_rgb, d_noise, &d_mod);
    eval_noise_backward(coords[b], transforms, model.bank, d_noise, theta.transforms.grad);
  }
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    for (std::size_t k = 0; k < d_mod.gamma[l].size(); ++k) {
      theta.gamma[l].grad[k] += d_mod.gamma[l][k];
      theta.delta[l].grad[k] += d_mod.delta[l][k];
    }
  }
  return style.total;
}

std::vector<SlicePlane> planes_for(const Model& model, Rng& rng, int count) {
  std::vector<SlicePlane> planes;
  for (int i = 0; i < count; ++i)
    planes.push_back(random_plane(model.config().slice_mode, rng, model.config().grain_axis));
  return planes;
}

void check_shapes(const Model& model, const AdaptableParams& theta) {
  const int width = model.config().sampler_width;
  if (theta.transforms.octaves() != model.config().octaves)
    throw std::invalid_argument("theta has " + std::to_string(theta.transforms.octaves()) +
                                " transforms, the model has " +
                                std::to_string(model.config().octaves) + " octaves");
  for (int l = 0; l < kSamplerHiddenLayers; ++l)
    if (theta.modulation.gamma[l].size() != static_cast<std::size_t>(width) ||
        theta.modulation.delta[l].size() != static_cast<std::size_t>(width))
      throw std::invalid_argument("theta modulation width does not match the sampler");
  for (int l = 0; l < kSamplerNoisyLayers; ++l)
    if (theta.injectors[l].size() != model.sampler.injection[l].size())
      throw std::invalid_argument("theta injector " + std::to_string(l) +
                                  " does not match the sampler");
}

}  // namespace

AdaptableParams predict_theta(const Model& model, const Tensor& patch) {
  if (!model.conditional())
    throw ModeError("adaptation needs a conditional checkpoint; this one is single-exemplar");
  const ConditionState s = model.conditioning->condition(patch);
  AdaptableParams theta;
  theta.z = s.z;
  theta.transforms = s.transforms;
  theta.modulation = s.modulation;
  for (int l = 0; l < kSamplerNoisyLayers; ++l)
    theta.injectors[l] = model.sampler.injection[l].value;
  return theta;
}

double theta_style(const Model& model, const AdaptableParams& theta,
                   const std::vector<SlicePlane>& planes, const FeatureExtractor& extractor,
                   const FeatureStack& real, AdaptableParams* grad) {
  check_shapes(model, theta);
  ThetaParams params(theta, model.sampler);
  zero_grads(params.sampler.params());
  zero_grads(params.list());
  const double value = slice_style(model, params, planes, extractor, real, grad != nullptr);
  if (grad) {
    grad->z.clear();
    grad->transforms = FrequencyTransforms::from_flat(params.transforms.grad);
    for (int l = 0; l < kSamplerHiddenLayers; ++l) {
      grad->modulation.gamma[l] = params.gamma[l].grad;
      grad->modulation.delta[l] = params.delta[l].grad;
    }
    for (int l = 0; l < kSamplerNoisyLayers; ++l)
      grad->injectors[l] = params.sampler.injection[l].grad;
  }
  return value;
}

AdaptResult adapt(const Model& model, const Tensor& patch, const AdaptSettings& settings) {
  return adapt_with_extractor(model, patch, model.critic, settings);
}

AdaptResult adapt_with_extractor(const Model& model, const Tensor& patch,
                                 const FeatureExtractor& extractor,
                                 const AdaptSettings& settings) {
  if (settings.iterations < 0) throw std::invalid_argument("adapt: negative iteration count");
  if (settings.batch_size < 1 || settings.eval_slices < 1)
    throw std::invalid_argument("adapt: batch sizes must be positive");
  if (!(settings.lr > 0)) throw std::invalid_argument("adapt: learning rate must be > 0");
  const AdaptableParams initial = predict_theta(model, patch);
  ThetaParams theta(initial, model.sampler);
  const ParamList params = theta.list();
  const FeatureStack real = extractor.extract(to_critic_range(patch), nullptr);

  Rng eval_rng(step_seed(settings.seed, -1));
  const auto eval_planes = planes_for(model, eval_rng, settings.eval_slices);

  AdaptResult result;
  result.style_before = slice_style(model, theta, eval_planes, extractor, real, false);
  Adam adam({settings.lr});
  for (int it = 0; it < settings.iterations; ++it) {
    Rng rng(step_seed(settings.seed, it));
    zero_grads(theta.sampler.params());
    zero_grads(params);
    const auto planes = planes_for(model, rng, settings.batch_size);
    result.style_trajectory.push_back(slice_style(model, theta, planes, extractor, real, true));
    if (settings.sgd) {
      for (Param* p : params)
        for (std::size_t i = 0; i < p->size(); ++i)
          p->value[i] -= static_cast<Real>(settings.lr) * p->grad[i];
    } else {
      adam.step(params);
    }
    for (const Param* p : params)
      for (Real v : p->value)
        if (!std::isfinite(v))
          throw TrainingError("adaptation: non-finite " + p->name + " at iteration " +
                              std::to_string(it));
  }
  result.style_after = settings.iterations == 0
                           ? result.style_before
                           : slice_style(model, theta, eval_planes, extractor, real, false);
  result.theta = theta.snapshot(initial.z);
  return result;
}

AdaptedTexture apply_theta(const Model& model, const AdaptableParams& theta) {
  if (!model.conditional())
    throw ModeError("adapted parameters apply only to a conditional model");
  check_shapes(model, theta);
  AdaptedTexture out{model, {}};
  for (int l = 0; l < kSamplerNoisyLayers; ++l)
    out.model.sampler.injection[l].value = theta.injectors[l];
  out.state.z = theta.z;
  out.state.transforms = theta.transforms;
  out.state.modulation = theta.modulation;
  return out;
}

void save_delta(const std::string& path, const AdaptableParams& theta,
                const std::string& parent_sha256) {
  detail::Writer w;
  w.bytes(kDeltaMagic, 4);
  w.u32(kDeltaVersion);
  w.str(parent_sha256);
  const int n = theta.transforms.octaves();
  w.u32(static_cast<std::uint32_t>(2 + 2 * kSamplerHiddenLayers + kSamplerNoisyLayers));
  w.record("adapt.z", {static_cast<int>(theta.z.size())}, theta.z);
  w.record("adapt.transforms", {n, 3, 3}, theta.transforms.flatten());
  for (int l = 0; l < kSamplerHiddenLayers; ++l) {
    const int width = static_cast<int>(theta.modulation.gamma[l].size());
    w.record("adapt.gamma." + std::to_string(l), {width}, theta.modulation.gamma[l]);
    w.record("adapt.delta." + std::to_string(l), {width}, theta.modulation.delta[l]);
  }
  for (int l = 0; l < kSamplerNoisyLayers; ++l) {
    const int width = static_cast<int>(theta.modulation.gamma[0].size());
    const int bin = width > 0 ? static_cast<int>(theta.injectors[l].size()) / width : 0;
    w.record("sampler.A" + std::to_string(l), {width, bin}, theta.injectors[l]);
  }
  detail::write_file(path, w.buffer(), "delta");
}

Delta load_delta(const std::string& path) {
  detail::Reader r(detail::read_file(path, "delta"), "delta " + path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kDeltaMagic, 4) != 0)
    throw CheckpointError(path + " is not an adaptation delta (bad magic bytes)");
  const std::uint32_t version = r.u32("version");
  if (version != kDeltaVersion)
    throw CheckpointError(path + ": unsupported delta version " + std::to_string(version));
  Delta d;
  d.parent_sha256 = r.str("parent hash", 256);
  const std::uint32_t count = r.u32("record count");
  std::array<bool, 2 + 2 * kSamplerHiddenLayers + kSamplerNoisyLayers> seen{};
  for (std::uint32_t i = 0; i < count; ++i) {
    detail::Record rec = r.record();
    auto mark = [&](std::size_t slot) {
      if (seen[slot]) throw CheckpointError(path + ": duplicate record \"" + rec.name + "\"");
      seen[slot] = true;
    };
    if (rec.name == "adapt.z") {
      mark(0);
      d.theta.z = std::move(rec.data);
    } else if (rec.name == "adapt.transforms") {
      mark(1);
      if (rec.data.size() % 9 != 0) throw CheckpointError(path + ": malformed transforms record");
      d.theta.transforms = FrequencyTransforms::from_flat(rec.data);
    } else {
      bool matched = false;
      for (int l = 0; l < kSamplerHiddenLayers && !matched; ++l) {
        if (rec.name == "adapt.gamma." + std::to_string(l)) {
          mark(2 + 2 * l);
          d.theta.modulation.gamma[l] = std::move(rec.data);
          matched = true;
        } else if (rec.name == "adapt.delta." + std::to_string(l)) {
          mark(3 + 2 * l);
          d.theta.modulation.delta[l] = std::move(rec.data);
          matched = true;
        }
      }
      for (int l = 0; l < kSamplerNoisyLayers && !matched; ++l) {
        if (rec.name == "sampler.A" + std::to_string(l)) {
          mark(2 + 2 * kSamplerHiddenLayers + l);
          d.theta.injectors[l] = std::move(rec.data);
          matched = true;
        }
      }
      if (!matched) throw CheckpointError(path + ": unexpected record \"" + rec.name + "\"");
    }
  }
  if (!r.at_end()) throw CheckpointError(path + " is corrupt: trailing bytes after last record");
  for (bool s : seen)
    if (!s) throw CheckpointError(path + ": missing records; expected the full theta set");
  return d;
}

AdaptedTexture load_adapted(const std::string& checkpoint_path, const std::string& delta_path) {
  const Delta d = load_delta(delta_path);
  const std::string actual = file_sha256(checkpoint_path);
  if (actual != d.parent_sha256)
    throw CheckpointError("delta " + delta_path + " was made for checkpoint " + d.parent_sha256 +
                          ", but " + checkpoint_path + " has hash " + actual);
  const Model model = load_checkpoint(checkpoint_path, TrainMode::Conditional);
  try {
    return apply_theta(model, d.theta);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("delta " + delta_path + " does not fit " + checkpoint_path + ": " +
                          e.what());
  }
}

}  // namespace gramgan
