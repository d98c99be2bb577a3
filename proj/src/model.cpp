#include "gramgan/model.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gramgan/errors.hpp"
#include "records.hpp"

namespace gramgan {

namespace {

constexpr char kMagic[4] = {'G', 'G', 'A', 'N'};
constexpr std::uint32_t kVersion = 1;

ConditioningShape conditioning_shape(const TrainConfig& c) {
  ConditioningShape s;
  s.octaves = c.octaves;
  s.sampler_width = c.sampler_width;
  s.patch_size = c.patch_size;
  s.latent_dim = kLatentDim;
  s.encoder_width_divisor = c.encoder_width_divisor;
  return s;
}

const TrainConfig& validated(const TrainConfig& c) {
  c.validate();
  return c;
}

}  // namespace

namespace detail {

std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + what + " " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes, const std::string& what) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  // Write to a sibling file first so an interrupted save never leaves a
  // half-written file under the final name.
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + what + " " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + what + " " + path);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

Model::Model(const TrainConfig& config)
    : bank(validated(config).octaves, config.noise_resolution, config.noise_seed),
      config_(config) {
  Rng rng(config.seed);
  sampler = Sampler(config.octaves, config.sampler_width, rng);
  if (config.mode == TrainMode::Single) {
    transform_param = Param("transforms", {config.octaves, 3, 3});
    transform_param.value = FrequencyTransforms::ladder(config.octaves, &rng).flatten();
  } else {
    conditioning.emplace(conditioning_shape(config), rng);
  }
  critic = ConvStack("critic", ConvStackArch::critic(config.patch_size, config.critic_width_divisor),
                     &rng);
  adam_g = Adam({config.lr_g});
  adam_d = Adam({config.lr_d});
}

FrequencyTransforms Model::transforms() const {
  if (conditional())
    throw ModeError("a conditional model has no free transforms; condition it on a patch");
  return FrequencyTransforms::from_flat(transform_param.value);
}

ParamList Model::generator_params() {
  ParamList list = sampler.params();
  if (conditional()) {
    const ParamList c = conditioning->params();
    list.insert(list.end(), c.begin(), c.end());
  } else {
    list.push_back(&transform_param);
  }
  return list;
}

ParamList Model::critic_params() { return critic.params(); }

ParamList Model::all_params() {
  ParamList list = generator_params();
  const ParamList c = critic_params();
  list.insert(list.end(), c.begin(), c.end());
  return list;
}

ConstParamList Model::all_params() const {
  auto list = const_cast<Model*>(this)->all_params();
  return {list.begin(), list.end()};
}

TextureQuery Model::texture(const ConditionState* state) const {
  if (conditional() && !state)
    throw ModeError("conditional model: texture queries need a condition state");
  if (!conditional() && state)
    throw ModeError("single-exemplar model: condition states are not supported");
  FrequencyTransforms t = state ? state->transforms : transforms();
  std::optional<Modulation> mod;
  if (state) mod = state->modulation;
  return [this, t = std::move(t), mod = std::move(mod)](std::span<const Vec3> coords,
                                                       std::span<Real> rgb) {
    evaluate_texture(coords, t, bank, sampler, mod ? &*mod : nullptr, rgb);
  };
}

Tensor Model::render(const SlicePlane& plane, const SliceSpec& spec,
                     const ConditionState* state) const {
  return render_slice(plane, spec, texture(state));
}

SliceSpec Model::slice_spec() const {
  SliceSpec s;
  s.resolution = config_.patch_size;
  s.pixel_spacing = Real(1) / config_.patch_size;
  s.mode = config_.slice_mode;
  s.grain_axis = config_.grain_axis;
  return s;
}

void save_checkpoint(const Model& model, const std::string& path) {
  detail::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(model.conditional() ? 1 : 0);
  w.u64(model.config().noise_seed);
  w.u32(static_cast<std::uint32_t>(model.config().noise_resolution));
  w.u32(static_cast<std::uint32_t>(model.config().octaves));
  w.u64(static_cast<std::uint64_t>(model.iteration));
  w.str(model.config().to_json());
  w.u64(static_cast<std::uint64_t>(model.adam_g.steps()));
  w.u64(static_cast<std::uint64_t>(model.adam_d.steps()));

  const ConstParamList params = model.all_params();
  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  for (const auto& m : model.adam_g.moments()) count += 2, (void)m;
  for (const auto& m : model.adam_d.moments()) count += 2, (void)m;
  w.u32(count);
  for (const Param* p : params) w.record(p->name, p->shape, p->value);
  auto moments = [&](const Adam& adam, const std::string& tag) {
    for (const auto& [name, m] : adam.moments()) {
      const std::vector<int> shape{static_cast<int>(m.m.size())};
      w.record("adam." + tag + ".m." + name, shape, m.m);
      w.record("adam." + tag + ".v." + name, shape, m.v);
    }
  };
  moments(model.adam_g, "g");
  moments(model.adam_d, "d");
  detail::write_file(path, w.buffer(), "checkpoint");
}

Model load_checkpoint(const std::string& path, std::optional<TrainMode> expected_mode) {
  detail::Reader r(detail::read_file(path, "checkpoint"), "checkpoint " + path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path + " is not a checkpoint (bad magic bytes)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t mode = r.u32("mode");
  if (mode > 1) throw CheckpointError(path + ": unknown mode tag " + std::to_string(mode));
  const TrainMode stored = mode == 1 ? TrainMode::Conditional : TrainMode::Single;
  if (expected_mode && *expected_mode != stored)
    throw ModeError(path + " holds a " + to_string(stored) + " model, but a " +
                    to_string(*expected_mode) + " model is required");
  const std::uint64_t noise_seed = r.u64("noise seed");
  const std::uint32_t noise_res = r.u32("noise resolution");
  const std::uint32_t octaves = r.u32("octave count");
  const std::uint64_t iteration = r.u64("iteration");
  TrainConfig config;
  try {
    config = TrainConfig::from_json(r.str("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": embedded config is invalid: " + e.what());
  }
  if (config.mode != stored || config.noise_seed != noise_seed ||
      static_cast<std::uint32_t>(config.noise_resolution) != noise_res ||
      static_cast<std::uint32_t>(config.octaves) != octaves)
    throw CheckpointError(path + ": header disagrees with the embedded config");
  const std::uint64_t steps_g = r.u64("optimizer step count");
  const std::uint64_t steps_d = r.u64("optimizer step count");

  Model model(config);
  model.iteration = static_cast<std::int64_t>(iteration);
  std::map<std::string, Param*> by_name;
  for (Param* p : model.all_params()) by_name[p->name] = p;
  std::set<std::string> seen;
  std::map<std::string, Adam::Moments> moments_g, moments_d;

  const std::uint32_t count = r.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    detail::Record rec = r.record();
    if (!seen.insert(rec.name).second)
      throw CheckpointError(path + ": duplicate record \"" + rec.name + "\"");
    if (rec.name.starts_with("adam.")) {
      // adam.<g|d>.<m|v>.<param name>
      if (rec.name.size() < 10 || rec.name[6] != '.' || rec.name[8] != '.' ||
          (rec.name[5] != 'g' && rec.name[5] != 'd') || (rec.name[7] != 'm' && rec.name[7] != 'v'))
        throw CheckpointError(path + ": malformed optimizer record \"" + rec.name + "\"");
      const std::string target = rec.name.substr(9);
      auto it = by_name.find(target);
      if (it == by_name.end() || rec.data.size() != it->second->size())
        throw CheckpointError(path + ": optimizer record \"" + rec.name +
                              "\" does not match any parameter");
      auto& slot = (rec.name[5] == 'g' ? moments_g : moments_d)[target];
      (rec.name[7] == 'm' ? slot.m : slot.v) = std::move(rec.data);
      continue;
    }
    auto it = by_name.find(rec.name);
    if (it == by_name.end())
      throw CheckpointError(path + ": unexpected record \"" + rec.name + "\" for this config");
    Param& p = *it->second;
    if (rec.shape != p.shape) {
      std::string want, got;
      for (int d : p.shape) want += std::to_string(d) + " ";
      for (int d : rec.shape) got += std::to_string(d) + " ";
      throw CheckpointError(path + ": record \"" + rec.name + "\" has shape [ " + got +
                            "], config expects [ " + want + "]");
    }
    p.value = std::move(rec.data);
  }
  if (!r.at_end()) throw CheckpointError(path + " is corrupt: trailing bytes after last record");
  for (const auto& [name, p] : by_name)
    if (!seen.count(name)) throw CheckpointError(path + ": missing record \"" + name + "\"");
  for (auto* moments : {&moments_g, &moments_d})
    for (const auto& [name, m] : *moments)
      if (m.m.empty() || m.v.empty())
        throw CheckpointError(path + ": incomplete optimizer moments for \"" + name + "\"");
  model.adam_g.restore(static_cast<std::int64_t>(steps_g), std::move(moments_g));
  model.adam_d.restore(static_cast<std::int64_t>(steps_d), std::move(moments_d));
  return model;
}

std::string file_sha256(const std::string& path) {
  const std::string bytes = detail::read_file(path, "file");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace gramgan
