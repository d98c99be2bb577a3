#include "gramgan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "gramgan/errors.hpp"

namespace gramgan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void require_finite(double v, const char* what, std::int64_t iteration) {
  if (!std::isfinite(v))
    throw TrainingError(std::string("non-finite ") + what + " at iteration " +
                        std::to_string(iteration));
}

double mean(std::span<const Real> v) {
  double s = 0;
  for (Real x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::uint64_t step_seed(std::uint64_t seed, std::int64_t iteration) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(iteration)));
}

Tensor to_critic_range(const Tensor& images) {
  Tensor out = images;
  for (Real& v : out.data) v = Real(2) * v - Real(1);
  return out;
}

Tensor render_fakes(const Model& model, const std::vector<SlicePlane>& planes,
                    const std::vector<ConditionState>* states) {
  const SliceSpec spec = model.slice_spec();
  const int p = spec.resolution;
  Tensor fakes(static_cast<int>(planes.size()), 3, p, p);
  for (std::size_t b = 0; b < planes.size(); ++b) {
    const Tensor img = model.render(planes[b], spec, states ? &(*states)[b] : nullptr);
    std::copy(img.data.begin(), img.data.end(), fakes.sample(static_cast<int>(b)));
  }
  return to_critic_range(fakes);
}

GeneratorResult generator_pass(Model& model, const GeneratorBatch& batch,
                               const LossWeights& weights, bool accumulate) {
  const int count = static_cast<int>(batch.planes.size());
  const int n = model.config().octaves;
  const SliceSpec spec = model.slice_spec();
  const int px = spec.resolution * spec.resolution;
  if (count < 1) throw std::invalid_argument("generator_pass: no planes");

  std::vector<ConditionState> states;
  ConditioningNets::Tape cond_tape;
  FrequencyTransforms single;
  if (model.conditional()) {
    if (batch.condition.n != count)
      throw std::invalid_argument("generator_pass: one condition patch per plane required");
    states = model.conditioning->forward(batch.condition, cond_tape);
  } else {
    single = model.transforms();
  }
  auto transforms_of = [&](int b) -> const FrequencyTransforms& {
    return model.conditional() ? states[b].transforms : single;
  };
  auto modulation_of = [&](int b) -> const Modulation* {
    return model.conditional() ? &states[b].modulation : nullptr;
  };

  Tensor fake(count, 3, spec.resolution, spec.resolution);
  std::vector<std::vector<Vec3>> coords(count);
  std::vector<std::vector<Real>> noise(count);
  std::vector<Real> rgb(static_cast<std::size_t>(px) * 3);
  for (int b = 0; b < count; ++b) {
    coords[b] = plane_to_coords(batch.planes[b], spec);
    noise[b].resize(static_cast<std::size_t>(px) * n);
    eval_noise_batch(coords[b], transforms_of(b), model.bank, noise[b]);
    model.sampler.forward_batch(noise[b], px, modulation_of(b), rgb);
    Real* dst = fake.sample(b);
    for (int p = 0; p < px; ++p)
      for (int ch = 0; ch < 3; ++ch) dst[ch * px + p] = Real(2) * rgb[p * 3 + ch] - Real(1);
  }

  const FeatureStack real_features = model.critic.extract(batch.real, nullptr);
  ConvStack::Tape tape;
  const Tensor scores = model.critic.forward(fake, &tape);
  const bool l2 = model.config().style_distance == "l2";

  GeneratorResult result;
  FeatureStack d_fake;
  if (accumulate)
    result.style = l2 ? style_loss_l2(real_features, tape.conv_out, weights.beta, d_fake)
                      : style_loss(real_features, tape.conv_out, weights.beta, d_fake);
  else
    result.style = l2 ? style_loss_l2(real_features, tape.conv_out)
                      : style_loss(real_features, tape.conv_out);
  result.scores = scores.data;
  result.loss_g = generator_loss(scores.data, result.style, weights.alpha, weights.beta);
  require_finite(result.loss_g, "generator loss", model.iteration);
  if (!accumulate) return result;

  Tensor d_scores(count, 1, 1, 1, static_cast<Real>(-weights.alpha / count));
  const Tensor d_image = model.critic.backward(tape, d_scores, &d_fake, false, true);

  ConditioningNets::StateGrads state_grads;
  std::vector<Real> d_rgb(static_cast<std::size_t>(px) * 3);
  std::vector<Real> d_noise(static_cast<std::size_t>(px) * n);
  std::vector<Real> d_transforms(static_cast<std::size_t>(n) * 9);
  for (int b = 0; b < count; ++b) {
    const Real* src = d_image.sample(b);
    // Chain through the 2x - 1 normalization.
    for (int p = 0; p < px; ++p)
      for (int ch = 0; ch < 3; ++ch) d_rgb[p * 3 + ch] = Real(2) * src[ch * px + p];
    Modulation d_mod;
    model.sampler.backward_batch(noise[b], px, modulation_of(b), d_rgb, d_noise,
                                 model.conditional() ? &d_mod : nullptr);
    std::fill(d_transforms.begin(), d_transforms.end(), Real(0));
    eval_noise_backward(coords[b], transforms_of(b), model.bank, d_noise, d_transforms);
    if (model.conditional()) {
      state_grads.transforms.insert(state_grads.transforms.end(), d_transforms.begin(),
                                    d_transforms.end());
      state_grads.modulation.push_back(std::move(d_mod));
    } else {
      for (std::size_t i = 0; i < d_transforms.size(); ++i)
        model.transform_param.grad[i] += d_transforms[i];
    }
  }
  if (model.conditional()) model.conditioning->backward(cond_tape, state_grads);
  return result;
}

CriticResult critic_pass(Model& model, const Tensor& real, const Tensor& fake,
                         std::span<const Real> t, bool accumulate) {
  if (!real.same_shape(fake))
    throw std::invalid_argument("critic_pass: real " + real.shape_string() + " vs fake " +
                                fake.shape_string());
  const double lambda = model.config().weights.lambda;
  ConvStack::Tape tape_real, tape_fake;
  const Tensor s_real = model.critic.forward(real, &tape_real);
  const Tensor s_fake = model.critic.forward(fake, &tape_fake);
  const Tensor u = interpolate(real, fake, t);
  const PenaltyResult pen = accumulate ? gradient_penalty_backward(u, model.critic, lambda)
                                       : gradient_penalty_at(real, fake, t, model.critic);
  CriticResult r;
  r.penalty = pen.value;
  r.loss_d = critic_loss(s_fake.data, s_real.data, pen.value, lambda);
  r.wasserstein = mean(s_real.data) - mean(s_fake.data);
  require_finite(r.loss_d, "critic loss", model.iteration);
  if (accumulate) {
    const int b = real.n;
    model.critic.backward(tape_fake, Tensor(b, 1, 1, 1, static_cast<Real>(1.0 / b)), nullptr,
                          true, false);
    model.critic.backward(tape_real, Tensor(b, 1, 1, 1, static_cast<Real>(-1.0 / b)), nullptr,
                          true, false);
  }
  return r;
}

Trainer::Trainer(Model& model, std::vector<Tensor> exemplars)
    : model_(model), exemplars_(std::move(exemplars)) {
  if (exemplars_.empty()) throw ConfigError("training needs at least one exemplar image");
  if (!model.conditional() && exemplars_.size() != 1)
    throw ConfigError("single-exemplar training takes exactly one exemplar, got " +
                      std::to_string(exemplars_.size()));
  const int p = model.config().patch_size;
  for (std::size_t k = 0; k < exemplars_.size(); ++k) {
    const Tensor& e = exemplars_[k];
    if (e.n != 1 || e.c != 3 || e.h < p || e.w < p)
      throw ConfigError("exemplar " + std::to_string(k) + " is " + e.shape_string() +
                        "; it must be an RGB image of at least " + std::to_string(p) + "x" +
                        std::to_string(p) + " pixels");
  }
}

Tensor Trainer::random_crop(int k, Rng& rng) const {
  const Tensor& e = exemplars_.at(k);
  const int p = model_.config().patch_size;
  std::uniform_int_distribution<int> ys(0, e.h - p), xs(0, e.w - p);
  const int y = ys(rng);
  const int x = xs(rng);
  Tensor out(1, 3, p, p);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < p; ++r)
      std::copy_n(&e.data[(static_cast<std::size_t>(c) * e.h + y + r) * e.w + x], p,
                  &out.data[(static_cast<std::size_t>(c) * p + r) * p]);
  return out;
}

std::vector<SlicePlane> Trainer::random_planes(Rng& rng) const {
  std::vector<SlicePlane> planes;
  for (int b = 0; b < model_.config().batch_size; ++b)
    planes.push_back(random_plane(model_.config().slice_mode, rng, model_.config().grain_axis));
  return planes;
}

StepMetrics Trainer::step() {
  return model_.conditional() ? train_step_conditional() : train_step_single();
}

StepMetrics Trainer::train_step_single() {
  if (model_.conditional()) throw ModeError("train_step_single needs a single-exemplar model");
  Rng rng(step_seed(model_.config().seed, model_.iteration));
  const int batch = model_.config().batch_size;
  const int p = model_.config().patch_size;
  Batch data;
  data.real = Tensor(batch, 3, p, p);
  for (int b = 0; b < batch; ++b) {
    const Tensor c = random_crop(0, rng);
    std::copy(c.data.begin(), c.data.end(), data.real.sample(b));
  }
  data.real = to_critic_range(data.real);
  return run_step(data, rng);
}

StepMetrics Trainer::train_step_conditional() {
  if (!model_.conditional()) throw ModeError("train_step_conditional needs a conditional model");
  Rng rng(step_seed(model_.config().seed, model_.iteration));
  const int batch = model_.config().batch_size;
  const int p = model_.config().patch_size;
  Batch data;
  data.real = Tensor(batch, 3, p, p);
  data.condition = Tensor(batch, 3, p, p);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(exemplars_.size()) - 1);
  for (int b = 0; b < batch; ++b) {
    // Condition and real patch: independent crops of the same texture.
    const int k = pick(rng);
    const Tensor x = random_crop(k, rng);
    const Tensor r = random_crop(k, rng);
    std::copy(x.data.begin(), x.data.end(), data.condition.sample(b));
    std::copy(r.data.begin(), r.data.end(), data.real.sample(b));
  }
  data.real = to_critic_range(data.real);
  return run_step(data, rng);
}

StepMetrics Trainer::run_step(const Batch& data, Rng& rng) {
  Model& m = model_;
  const int batch = data.real.n;
  StepMetrics metrics;
  metrics.iteration = m.iteration;

  // Critic phase.
  std::vector<ConditionState> states;
  if (m.conditional()) {
    ConditioningNets::Tape tape;
    states = m.conditioning->forward(data.condition, tape);
  }
  const Tensor fake = render_fakes(m, random_planes(rng), m.conditional() ? &states : nullptr);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Real> t(batch);
  for (Real& v : t) v = static_cast<Real>(unit(rng));

  const ParamList gen = m.generator_params();
  const ParamList crit = m.critic_params();
  const std::uint64_t gen_before =
      check_phase_isolation ? fingerprint(ConstParamList(gen.begin(), gen.end())) : 0;
  zero_grads(crit);
  const CriticResult cr = critic_pass(m, data.real, fake, t, true);
  m.adam_d.step(crit);
  if (check_phase_isolation && fingerprint(ConstParamList(gen.begin(), gen.end())) != gen_before)
    throw std::logic_error("critic phase modified generator parameters");

  // Generator phase on fresh slices.
  const std::uint64_t crit_before =
      check_phase_isolation ? fingerprint(ConstParamList(crit.begin(), crit.end())) : 0;
  GeneratorBatch gb;
  gb.real = data.real;
  gb.planes = random_planes(rng);
  gb.condition = data.condition;
  zero_grads(gen);
  const GeneratorResult gr = generator_pass(m, gb, m.config().weights, true);
  m.adam_g.step(gen);
  if (check_phase_isolation && fingerprint(ConstParamList(crit.begin(), crit.end())) != crit_before)
    throw std::logic_error("generator phase modified critic parameters");

  for (const Param* p : gen)
    for (Real v : p->value)
      if (!std::isfinite(v))
        throw TrainingError("non-finite value in " + p->name + " after iteration " +
                            std::to_string(m.iteration));

  metrics.loss_d = cr.loss_d;
  metrics.wasserstein = cr.wasserstein;
  metrics.penalty = cr.penalty;
  metrics.loss_g = gr.loss_g;
  metrics.loss_style = gr.style.total;
  ++m.iteration;
  return metrics;
}

std::string Trainer::run(std::int64_t until, const std::string& metrics_csv,
                         const std::function<void(const StepMetrics&)>& on_step) {
  const std::filesystem::path dir(model_.config().output_dir);
  std::filesystem::create_directories(dir);
  const bool fresh = !std::filesystem::exists(metrics_csv) ||
                     std::filesystem::file_size(metrics_csv) == 0;
  std::ofstream csv(metrics_csv, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open metrics file " + metrics_csv);
  if (fresh) csv << "iteration,L_D,L_G,L_style,wasserstein\n";

  const std::int64_t every = model_.config().checkpoint_every;
  while (model_.iteration < until) {
    StepMetrics m;
    try {
      m = step();
    } catch (const TrainingError& e) {
      const std::string snapshot = (dir / "abort_snapshot.ggan").string();
      save_checkpoint(model_, snapshot);
      throw TrainingError(std::string(e.what()) + "; diagnostic snapshot written to " + snapshot);
    }
    csv << m.iteration << ',' << format_metric(m.loss_d) << ',' << format_metric(m.loss_g) << ','
        << format_metric(m.loss_style) << ',' << format_metric(m.wasserstein) << '\n';
    csv.flush();
    if (on_step) on_step(m);
    if (every > 0 && model_.iteration % every == 0)
      save_checkpoint(model_, (dir / ("checkpoint_" + std::to_string(model_.iteration) + ".ggan")).string());
  }
  const std::string final_path = (dir / "final.ggan").string();
  save_checkpoint(model_, final_path);
  return final_path;
}

}  // namespace gramgan
