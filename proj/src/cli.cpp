#include "gramgan/cli.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "gramgan/adaptation.hpp"
#include "gramgan/errors.hpp"
#include "gramgan/evaluation.hpp"
#include "gramgan/io.hpp"
#include "gramgan/trainer.hpp"

namespace gramgan {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  int threads = 1;
};

/// A loaded model plus whatever conditions it.
struct Texture {
  Model model;
  std::optional<ConditionState> state;

  const ConditionState* condition() const { return state ? &*state : nullptr; }
  TextureQuery query() const { return model.texture(condition()); }
};

struct PlaneOptions {
  std::vector<double> origin{0, 0, 0};
  std::vector<double> u{1, 0, 0};
  std::vector<double> v{0, 1, 0};
  bool random = false;
  int resolution = 0;
  double spacing = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--origin", origin, "Plane centre in world units")->expected(3);
    cmd->add_option("--u", u, "In-plane row direction")->expected(3);
    cmd->add_option("--v", v, "In-plane column direction")->expected(3);
    cmd->add_flag("--random", random, "Draw a random plane from --seed instead");
    cmd->add_option("--resolution", resolution, "Output pixels per side (default: patch size)");
    cmd->add_option("--spacing", spacing, "World units per pixel (default: 1 / patch size)");
  }

  SliceSpec spec(const Model& model) const {
    SliceSpec s = model.slice_spec();
    if (resolution != 0) s.resolution = resolution;
    if (spacing != 0) s.pixel_spacing = static_cast<Real>(spacing);
    if (s.resolution < 1) throw std::invalid_argument("--resolution must be >= 1");
    if (!(s.pixel_spacing > 0)) throw std::invalid_argument("--spacing must be > 0");
    return s;
  }

  SlicePlane plane(const Model& model, std::uint64_t seed) const {
    if (random) {
      Rng rng(seed);
      return random_plane(model.slice_spec().mode, rng, model.config().grain_axis);
    }
    auto vec = [](const std::vector<double>& a) {
      return Vec3{static_cast<Real>(a[0]), static_cast<Real>(a[1]), static_cast<Real>(a[2])};
    };
    SlicePlane p{vec(origin), vec(u), vec(v)};
    if (std::abs(dot(p.u, p.u) - 1) > 1e-4 || std::abs(dot(p.v, p.v) - 1) > 1e-4 ||
        std::abs(dot(p.u, p.v)) > 1e-4)
      throw std::invalid_argument("--u and --v must be orthonormal");
    return p;
  }
};

struct TextureOptions {
  std::string checkpoint;
  std::string exemplar;
  std::string delta;

  void add_to(CLI::App* cmd) {
    cmd->add_option("checkpoint", checkpoint, "Model checkpoint")->required();
    cmd->add_option("--exemplar", exemplar,
                    "Image whose central patch conditions a conditional model");
    cmd->add_option("--delta", delta, "Adapted delta applied on top of the checkpoint");
  }

  Texture load() const {
    if (!delta.empty()) {
      if (!exemplar.empty()) throw std::invalid_argument("--exemplar and --delta are exclusive");
      AdaptedTexture a = load_adapted(checkpoint, delta);
      return {std::move(a.model), std::move(a.state)};
    }
    Texture t{load_checkpoint(checkpoint), std::nullopt};
    if (t.model.conditional()) {
      if (exemplar.empty())
        throw ModeError(checkpoint + " is conditional: pass --exemplar or --delta");
      t.state = t.model.conditioning->condition(central_patch(read_png(exemplar), t.model));
    } else if (!exemplar.empty()) {
      throw ModeError(checkpoint + " is a single-exemplar model and takes no --exemplar");
    }
    return t;
  }

  static Tensor central_patch(const Tensor& image, const Model& model) {
    const int p = model.config().patch_size;
    if (image.h < p || image.w < p)
      throw std::invalid_argument("image " + image.shape_string() + " is smaller than the " +
                                  std::to_string(p) + " px patch size");
    return crop(image, (image.h - p) / 2, (image.w - p) / 2, p);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Real clamp01(Real v) { return std::clamp(v, Real(0), Real(1)); }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

int cmd_train(const Globals& g, bool seed_given, std::int64_t iterations,
              const std::string& resume, std::ostream& out) {
  if (g.config.empty()) throw ConfigError("train needs --config <file.json>");
  TrainConfig config = TrainConfig::load(g.config);
  if (seed_given) config.seed = g.seed;
  if (iterations >= 0) config.iterations = iterations;
  // Relative paths in a config file are relative to that file.
  const fs::path base = fs::path(g.config).parent_path();
  config.output_dir = resolve(base, config.output_dir).string();
  if (config.exemplars.empty()) throw ConfigError("exemplars: at least one image is required");
  std::vector<Tensor> images;
  for (const std::string& e : config.exemplars) images.push_back(read_png(resolve(base, e)));
  config.validate();

  std::optional<Model> model;
  if (resume.empty()) {
    model.emplace(config);
  } else {
    model.emplace(load_checkpoint(resume, config.mode));
    if (model->config().to_json() != config.to_json()) {
      TrainConfig stored = model->config();
      stored.iterations = config.iterations;
      stored.output_dir = config.output_dir;
      stored.checkpoint_every = config.checkpoint_every;
      stored.exemplars = config.exemplars;
      if (stored.to_json() != config.to_json())
        throw ConfigError("--resume: checkpoint was trained with a different configuration");
    }
  }
  fs::create_directories(config.output_dir);
  {
    std::ofstream cfg(fs::path(config.output_dir) / "config.json");
    cfg << config.to_json() << "\n";
  }
  Trainer trainer(*model, std::move(images));
  const std::string csv = (fs::path(config.output_dir) / "metrics.csv").string();
  const std::string final_path = trainer.run(config.iterations, csv, [&](const StepMetrics& m) {
    if (m.iteration % 100 == 0 || m.iteration + 1 == config.iterations)
      out << "iteration " << m.iteration << "  L_D " << fmt(m.loss_d) << "  L_G "
          << fmt(m.loss_g) << "  L_style " << fmt(m.loss_style) << "\n";
  });
  out << "final checkpoint: " << final_path << "\n";
  return kExitOk;
}

int cmd_slice(const Globals& g, const TextureOptions& to, const PlaneOptions& po,
              const std::string& output, std::ostream& out) {
  const Texture t = to.load();
  const Tensor img = t.model.render(po.plane(t.model, g.seed), po.spec(t.model), t.condition());
  write_png(output, img);
  out << "wrote " << output << "\n";
  return kExitOk;
}

int cmd_volume(const TextureOptions& to, const std::vector<int>& dims,
               const std::vector<double>& extent, const std::vector<double>& origin,
               const std::string& output, std::ostream& out) {
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("--dims must all be positive");
  for (double e : extent)
    if (!(e > 0)) throw std::invalid_argument("--extent must all be positive");
  const Texture t = to.load();
  VolumeHeader h;
  for (int a = 0; a < 3; ++a) {
    h.dims[a] = static_cast<std::uint32_t>(dims[a]);
    h.extent[a] = static_cast<float>(extent[a]);
    h.origin[a] = static_cast<float>(origin[a]);
  }
  const TextureQuery query = t.query();
  VolumeWriter writer(output, h);
  const std::size_t slab = static_cast<std::size_t>(h.dims[0]) * h.dims[1];
  std::vector<Vec3> coords(slab);
  std::vector<Real> rgb(slab * 3);
  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x)
        coords[static_cast<std::size_t>(y) * dims[0] + x] = h.voxel_position(x, y, z);
    query(coords, rgb);
    for (Real& v : rgb) v = clamp01(v);
    writer.write_slab(rgb);
  }
  writer.close();
  out << "wrote " << output << "\n";
  return kExitOk;
}

int cmd_points(const TextureOptions& to, const std::string& points, const std::string& output,
               std::ostream& out) {
  const std::vector<Vec3> pts = read_points(points);
  const Texture t = to.load();
  std::vector<Real> rgb(pts.size() * 3);
  if (!pts.empty()) t.query()(pts, rgb);
  std::ofstream f(output);
  if (!f) throw IoError("cannot write " + output);
  f << "x y z r g b\n";
  for (std::size_t i = 0; i < pts.size(); ++i)
    f << fmt(pts[i].x) << ' ' << fmt(pts[i].y) << ' ' << fmt(pts[i].z) << ' '
      << fmt(clamp01(rgb[3 * i])) << ' ' << fmt(clamp01(rgb[3 * i + 1])) << ' '
      << fmt(clamp01(rgb[3 * i + 2])) << '\n';
  if (!f) throw IoError("failed writing " + output);
  out << "wrote " << pts.size() << " points to " << output << "\n";
  return kExitOk;
}

int cmd_interpolate(const Globals& g, const std::string& checkpoint, const std::string& a,
                    const std::string& b, int steps, const PlaneOptions& po,
                    const std::string& output, std::ostream& out) {
  if (steps < 2) throw std::invalid_argument("--steps must be >= 2");
  const Model model = load_checkpoint(checkpoint, TrainMode::Conditional);
  const ConditioningNets& nets = *model.conditioning;
  const std::vector<Real> za = nets.encode(TextureOptions::central_patch(read_png(a), model));
  const std::vector<Real> zb = nets.encode(TextureOptions::central_patch(read_png(b), model));
  const SlicePlane plane = po.plane(model, g.seed);
  const SliceSpec spec = po.spec(model);
  std::vector<Tensor> tiles;
  std::vector<Real> z(za.size());
  for (int s = 0; s < steps; ++s) {
    const Real t = static_cast<Real>(s) / static_cast<Real>(steps - 1);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1 - t) * za[i] + t * zb[i];
    const ConditionState state = nets.state_from_latent(z);
    tiles.push_back(model.render(plane, spec, &state));
  }
  write_png(output, hconcat(tiles));
  out << "wrote " << steps << " steps to " << output << "\n";
  return kExitOk;
}

int cmd_adapt(const Globals& g, const std::string& checkpoint, const std::string& patch,
              AdaptSettings settings, const std::string& output, std::ostream& out) {
  const Model model = load_checkpoint(checkpoint, TrainMode::Conditional);
  settings.seed = g.seed;
  const Tensor p = TextureOptions::central_patch(read_png(patch), model);
  const AdaptResult r = adapt(model, p, settings);
  save_delta(output, r.theta, file_sha256(checkpoint));
  out << "L_style " << fmt(r.style_before) << " -> " << fmt(r.style_after) << "\n";
  out << "wrote " << output << "\n";
  return kExitOk;
}

void write_report(const fs::path& path, const char* column, const MetricReport& r) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "index," << column << "\n";
  for (std::size_t i = 0; i < r.values.size(); ++i) f << i << ',' << fmt(r.values[i]) << "\n";
  if (!f) throw IoError("failed writing " + path.string());
}

struct EvaluateOptions {
  std::string reference;
  std::string out_dir = ".";
  std::string extractor;
  bool sifid = false;
  bool all = false;
  bool self_test = false;
  int count = 50;
  int all_size = 32;
};

int cmd_evaluate(const Globals& g, const std::string& checkpoint, const EvaluateOptions& o,
                 std::ostream& out) {
  if (!o.sifid && !o.all) throw std::invalid_argument("evaluate: pass --sifid and/or --all");
  if (o.count < 1) throw std::invalid_argument("--count must be >= 1");
  const Tensor reference = read_png(o.reference);
  fs::create_directories(o.out_dir);
  std::string summary;

  if (o.sifid) {
    std::unique_ptr<ConvStack> ex =
        o.extractor.empty() ? extractor_from_env() : load_extractor(o.extractor);
    MetricReport r;
    if (o.self_test) {
      for (int i = 0; i < o.count; ++i) r.values.push_back(sifid(reference, reference, *ex));
    } else {
      r = sifid_protocol(load_checkpoint(checkpoint), reference, *ex, o.count, g.seed);
    }
    write_report(fs::path(o.out_dir) / "sifid.csv", "sifid", r);
    summary += "SIFID over " + std::to_string(r.count()) + " slices: mean " + fmt(r.mean()) +
               ", std " + fmt(r.stddev()) + "\n";
  }

  if (o.all) {
    const Model model = load_checkpoint(checkpoint);
    std::optional<ConditionState> state;
    if (model.conditional())
      state = model.conditioning->condition(TextureOptions::central_patch(reference, model));
    const SliceSpec spec = model.slice_spec();
    const int p = spec.resolution;
    if (reference.h < p || reference.w < p)
      throw std::invalid_argument("--all: reference is smaller than the patch size");
    const int size = std::min(o.all_size, p);
    std::vector<std::vector<double>> generated, truth;
    for (int i = 0; i < o.count; ++i) {
      Rng rng(step_seed(g.seed, i));
      Tensor s = model.render(random_plane(spec.mode, rng, spec.grain_axis), spec,
                              state ? &*state : nullptr);
      for (Real& v : s.data) v = clamp01(v);
      generated.push_back(image_sample(s, size));
      Rng crop_rng(step_seed(g.seed, -1 - i));
      const int y = std::uniform_int_distribution<int>(0, reference.h - p)(crop_rng);
      const int x = std::uniform_int_distribution<int>(0, reference.w - p)(crop_rng);
      truth.push_back(image_sample(crop(reference, y, x, p), size));
    }
    std::vector<double> grid;
    for (int k = 0; k < 13; ++k) grid.push_back(0.01 * std::pow(10.0, k / 6.0));
    const double h = truth.size() > 1 ? bandwidth_grid_search(truth, grid) : 0.1;
    MetricReport r;
    for (const auto& s : generated) r.values.push_back(average_log_likelihood({s}, truth, h));
    write_report(fs::path(o.out_dir) / "all.csv", "log_likelihood", r);
    summary += "ALL over " + std::to_string(r.count()) + " slices: " + fmt(r.mean()) +
               " (bandwidth " + fmt(h) + ", " + std::to_string(size) + "x" +
               std::to_string(size) + " samples)\n";
  }

  std::ofstream(fs::path(o.out_dir) / "summary.txt") << summary;
  out << summary;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Solid texture synthesis with Gram-matrix GANs", "gramgan"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice of the command");
  app.add_option("--config", g.config, "Training configuration (JSON)");
  app.add_option("--threads", g.threads, "Worker threads; 1 guarantees reproducible output")
      ->check(CLI::Range(1, 4096));

  std::function<int()> action;

  auto* train = app.add_subcommand("train", "Train a model from a configuration file");
  std::int64_t train_iterations = -1;
  std::string resume;
  train->add_option("--iterations", train_iterations, "Override the configured iteration count");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->callback([&] {
    action = [&] { return cmd_train(g, app.count("--seed") > 0, train_iterations, resume, out); };
  });

  auto* slice = app.add_subcommand("slice", "Render one planar slice to PNG");
  TextureOptions slice_tex;
  PlaneOptions slice_plane;
  std::string slice_out;
  slice_tex.add_to(slice);
  slice_plane.add_to(slice);
  slice->add_option("-o,--output", slice_out, "Output PNG")->required();
  slice->callback([&] {
    action = [&] { return cmd_slice(g, slice_tex, slice_plane, slice_out, out); };
  });

  auto* volume = app.add_subcommand("volume", "Sample the texture on a 3D lattice (GGVX)");
  TextureOptions vol_tex;
  std::vector<int> dims;
  std::vector<double> extent{1, 1, 1}, origin{0, 0, 0};
  std::string vol_out;
  vol_tex.add_to(volume);
  volume->add_option("--dims", dims, "Voxels along x y z")->expected(3)->required();
  volume->add_option("--extent", extent, "World size along x y z")->expected(3);
  volume->add_option("--origin", origin, "World position of voxel (0, 0, 0)")->expected(3);
  volume->add_option("-o,--output", vol_out, "Output .ggvx file")->required();
  volume->callback([&] {
    action = [&] { return cmd_volume(vol_tex, dims, extent, origin, vol_out, out); };
  });

  auto* points = app.add_subcommand("texture-points", "Color a list of 3D points");
  TextureOptions pts_tex;
  std::string pts_in, pts_out;
  pts_tex.add_to(points);
  points->add_option("points", pts_in, "Text file of \"x y z\" lines")->required();
  points->add_option("-o,--output", pts_out, "Output \"x y z r g b\" file")->required();
  points->callback([&] { action = [&] { return cmd_points(pts_tex, pts_in, pts_out, out); }; });

  auto* interp = app.add_subcommand("interpolate", "Render a latent interpolation strip");
  std::string interp_ckpt, interp_a, interp_b, interp_out;
  int interp_steps = 8;
  PlaneOptions interp_plane;
  interp->add_option("checkpoint", interp_ckpt, "Conditional checkpoint")->required();
  interp->add_option("--a", interp_a, "First exemplar image")->required();
  interp->add_option("--b", interp_b, "Second exemplar image")->required();
  interp->add_option("--steps", interp_steps, "Number of tiles, endpoints included");
  interp_plane.add_to(interp);
  interp->add_option("-o,--output", interp_out, "Output PNG strip")->required();
  interp->callback([&] {
    action = [&] {
      return cmd_interpolate(g, interp_ckpt, interp_a, interp_b, interp_steps, interp_plane,
                             interp_out, out);
    };
  });

  auto* adapt_cmd = app.add_subcommand("adapt", "Fine-tune a conditional model to a new exemplar");
  std::string adapt_ckpt, adapt_patch, adapt_out;
  AdaptSettings settings;
  adapt_cmd->add_option("checkpoint", adapt_ckpt, "Conditional checkpoint")->required();
  adapt_cmd->add_option("--patch", adapt_patch, "Exemplar image (central patch is used)")
      ->required();
  adapt_cmd->add_option("--iterations", settings.iterations, "Optimizer steps");
  adapt_cmd->add_option("--lr", settings.lr, "Learning rate");
  adapt_cmd->add_flag("--sgd", settings.sgd, "Plain gradient descent instead of Adam");
  adapt_cmd->add_option("--batch-size", settings.batch_size, "Slices per step");
  adapt_cmd->add_option("-o,--output", adapt_out, "Output delta file")->required();
  adapt_cmd->callback([&] {
    action = [&] { return cmd_adapt(g, adapt_ckpt, adapt_patch, settings, adapt_out, out); };
  });

  auto* evaluate = app.add_subcommand("evaluate", "Score a model against a reference image");
  std::string eval_ckpt;
  EvaluateOptions eo;
  evaluate->add_option("checkpoint", eval_ckpt, "Model checkpoint")->required();
  evaluate->add_option("--reference", eo.reference, "Reference image")->required();
  evaluate->add_flag("--sifid", eo.sifid, "Single-image FID over random slices");
  evaluate->add_flag("--all", eo.all, "Average log-likelihood of slices");
  evaluate->add_option("--count", eo.count, "Number of slices");
  evaluate->add_flag("--self-test", eo.self_test, "Score the reference against itself");
  evaluate->add_option("--extractor", eo.extractor,
                       std::string("SIFID extractor; overrides ") + kSifidExtractorEnv);
  evaluate->add_option("--all-size", eo.all_size, "Downsampled side length of ALL samples");
  evaluate->add_option("--out-dir", eo.out_dir, "Directory for report files");
  evaluate->callback([&] { action = [&] { return cmd_evaluate(g, eval_ckpt, eo, out); }; });

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> argv_store{"gramgan"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "gramgan: " << e.what() << "\n";
    return kExitConfig;
  }
  Eigen::setNbThreads(g.threads);

  try {
    return action();
  } catch (const ConfigError& e) {
    err << "gramgan: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "gramgan: invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "gramgan: training aborted: " << e.what() << "\n";
    return kExitTrainingAbort;
  } catch (const std::exception& e) {
    err << "gramgan: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace gramgan
