#include "gramgan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gramgan/errors.hpp"
#include "json.hpp"

namespace gramgan {

using nlohmann::json;

const char* to_string(TrainMode mode) {
  return mode == TrainMode::Single ? "single" : "conditional";
}

TrainConfig TrainConfig::defaults(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  if (mode == TrainMode::Conditional) {
    c.octaves = 32;
    c.iterations = 300000;
  }
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (octaves < 4 || octaves % 4 != 0)
    fail("octaves = " + std::to_string(octaves) +
         ": must be a positive multiple of 4 so noise splits into four equal bins");
  if (sampler_width < 1) fail("sampler_width must be >= 1");
  if (critic_width_divisor < 1) fail("critic_width_divisor must be >= 1");
  if (encoder_width_divisor < 1) fail("encoder_width_divisor must be >= 1");
  if (patch_size < 4 || (patch_size & (patch_size - 1)) != 0)
    fail("patch_size must be a power of two >= 4");
  if (noise_resolution < 2) fail("noise_resolution must be >= 2");
  if (!(lr_d > 0)) fail("lr_d must be > 0");
  if (!(lr_g > 0)) fail("lr_g must be > 0");
  weights.validate(mode == TrainMode::Conditional);
  if (style_distance != "l1" && style_distance != "l2")
    fail("style_distance must be \"l1\" or \"l2\"");
  if (iterations < 0) fail("iterations must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (grain_axis < 0 || grain_axis > 2) fail("grain_axis must be x, y or z");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

namespace {

const char* axis_name(int axis) { return axis == 0 ? "x" : axis == 1 ? "y" : "z"; }

}  // namespace

std::string TrainConfig::to_json() const {
  json j;
  j["mode"] = to_string(mode);
  j["octaves"] = octaves;
  j["sampler_width"] = sampler_width;
  j["critic_width_divisor"] = critic_width_divisor;
  j["encoder_width_divisor"] = encoder_width_divisor;
  j["patch_size"] = patch_size;
  j["noise_resolution"] = noise_resolution;
  j["noise_seed"] = noise_seed;
  j["seed"] = seed;
  j["lr_d"] = lr_d;
  j["lr_g"] = lr_g;
  j["alpha"] = weights.alpha;
  j["beta"] = weights.beta;
  j["lambda"] = weights.lambda;
  j["style_distance"] = style_distance;
  j["iterations"] = iterations;
  j["batch_size"] = batch_size;
  j["slice_mode"] = slice_mode == SliceMode::Isotropic ? "isotropic" : "anisotropic";
  j["grain_axis"] = axis_name(grain_axis);
  j["checkpoint_every"] = checkpoint_every;
  j["exemplars"] = exemplars;
  j["output_dir"] = output_dir;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  TrainMode mode = TrainMode::Single;
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m == "single") mode = TrainMode::Single;
    else if (m == "conditional") mode = TrainMode::Conditional;
    else throw ConfigError("mode must be \"single\" or \"conditional\", got \"" + m + "\"");
  }
  TrainConfig c = defaults(mode);

  static const std::set<std::string> known = {
      "mode", "octaves", "sampler_width", "critic_width_divisor", "encoder_width_divisor",
      "patch_size", "noise_resolution", "noise_seed", "seed", "lr_d", "lr_g", "alpha", "beta",
      "lambda", "style_distance", "iterations", "batch_size", "slice_mode", "grain_axis",
      "checkpoint_every", "exemplars", "output_dir"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key \"" + key + "\"");

  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("octaves", c.octaves);
    get("sampler_width", c.sampler_width);
    get("critic_width_divisor", c.critic_width_divisor);
    get("encoder_width_divisor", c.encoder_width_divisor);
    get("patch_size", c.patch_size);
    get("noise_resolution", c.noise_resolution);
    get("seed", c.seed);
    c.noise_seed = c.seed;
    get("noise_seed", c.noise_seed);
    get("lr_d", c.lr_d);
    get("lr_g", c.lr_g);
    get("alpha", c.weights.alpha);
    get("beta", c.weights.beta);
    get("lambda", c.weights.lambda);
    get("style_distance", c.style_distance);
    get("iterations", c.iterations);
    get("batch_size", c.batch_size);
    get("checkpoint_every", c.checkpoint_every);
    get("exemplars", c.exemplars);
    get("output_dir", c.output_dir);
    if (j.contains("slice_mode")) {
      const std::string s = j["slice_mode"].get<std::string>();
      if (s == "isotropic") c.slice_mode = SliceMode::Isotropic;
      else if (s == "anisotropic") c.slice_mode = SliceMode::Anisotropic;
      else throw ConfigError("slice_mode must be \"isotropic\" or \"anisotropic\"");
    }
    if (j.contains("grain_axis")) {
      const std::string a = j["grain_axis"].get<std::string>();
      if (a == "x") c.grain_axis = 0;
      else if (a == "y") c.grain_axis = 1;
      else if (a == "z") c.grain_axis = 2;
      else throw ConfigError("grain_axis must be \"x\", \"y\" or \"z\"");
    }
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace gramgan
