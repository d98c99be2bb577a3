#include "gramgan/evaluation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "gramgan/errors.hpp"
#include "gramgan/io.hpp"
#include "gramgan/trainer.hpp"
#include "records.hpp"

namespace gramgan {

namespace {

using MatD = Eigen::MatrixXd;

constexpr char kExtractorMagic[4] = {'G', 'G', 'F', 'X'};
constexpr std::uint32_t kExtractorVersion = 1;

MatD to_matrix(const FeatureGaussian& g, double jitter) {
  MatD m(g.dim, g.dim);
  for (int i = 0; i < g.dim; ++i)
    for (int j = 0; j < g.dim; ++j) m(i, j) = g.covariance[static_cast<std::size_t>(i) * g.dim + j];
  m.diagonal().array() += jitter;
  return m;
}

MatD psd_sqrt(const MatD& m) {
  Eigen::SelfAdjointEigenSolver<MatD> es(m);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

double log_sum_exp(const std::vector<double>& v) {
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void check_sample_sets(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("likelihood: empty sample set");
  const std::size_t d = b.front().size();
  if (d == 0) throw std::invalid_argument("likelihood: zero-dimensional samples");
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      if (s.size() != d) throw std::invalid_argument("likelihood: samples differ in dimension");
}

double log_kernel_norm(std::size_t dim, double h) {
  return -0.5 * static_cast<double>(dim) * std::log(2 * std::numbers::pi * h * h);
}

}  // namespace

double MetricReport::mean() const {
  if (values.empty()) return 0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double MetricReport::stddev() const {
  if (values.size() < 2) return 0;
  const double m = mean();
  double s = 0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

FeatureGaussian fit_gaussian(const Tensor& feature_map) {
  const int c = feature_map.c;
  const int p = feature_map.h * feature_map.w;
  if (feature_map.n != 1 || c < 1 || p < 2)
    throw std::invalid_argument("fit_gaussian: need one feature map with at least two positions, got " +
                                feature_map.shape_string());
  FeatureGaussian g;
  g.dim = c;
  g.mean.assign(c, 0.0);
  g.covariance.assign(static_cast<std::size_t>(c) * c, 0.0);
  Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> f(
      feature_map.data.data(), c, p);
  const MatD x = f.cast<double>();
  const Eigen::VectorXd mu = x.rowwise().mean();
  const MatD centered = x.colwise() - mu;
  const MatD cov = centered * centered.transpose() / static_cast<double>(p - 1);
  for (int i = 0; i < c; ++i) {
    g.mean[i] = mu(i);
    for (int j = 0; j < c; ++j) g.covariance[static_cast<std::size_t>(i) * c + j] = cov(i, j);
  }
  return g;
}

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b, double jitter) {
  if (a.dim != b.dim || a.dim < 1)
    throw std::invalid_argument("frechet_distance: feature dimensions differ");
  const MatD s1 = to_matrix(a, jitter);
  const MatD s2 = to_matrix(b, jitter);
  const MatD r1 = psd_sqrt(s1);
  MatD inner = r1 * s2 * r1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<MatD> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  double mean_term = 0;
  for (int i = 0; i < a.dim; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const double d = mean_term + s1.trace() + s2.trace() - 2 * tr_sqrt;
  return std::max(d, 0.0);
}

double sifid(const Tensor& reference, const Tensor& sample, const FeatureExtractor& extractor) {
  if (!reference.same_shape(sample) || reference.n != 1 || reference.c != 3)
    throw std::invalid_argument("sifid: images must be single RGB images of one size, got " +
                                reference.shape_string() + " and " + sample.shape_string());
  const FeatureStack fa = extractor.extract(to_critic_range(reference), nullptr);
  const FeatureStack fb = extractor.extract(to_critic_range(sample), nullptr);
  if (fa.empty()) throw std::invalid_argument("sifid: extractor produced no feature maps");
  return frechet_distance(fit_gaussian(fa.back()), fit_gaussian(fb.back()));
}

MetricReport sifid_protocol(const Model& model, const Tensor& reference,
                            const FeatureExtractor& extractor, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sifid_protocol: count must be >= 1");
  if (reference.n != 1 || reference.h != reference.w)
    throw std::invalid_argument("sifid_protocol: reference must be one square image");
  std::optional<ConditionState> state;
  if (model.conditional()) {
    const int p = model.config().patch_size;
    if (reference.h < p)
      throw std::invalid_argument("sifid_protocol: reference smaller than the model patch size");
    const int off = (reference.h - p) / 2;
    state = model.conditioning->condition(crop(reference, off, off, p));
  }
  SliceSpec spec = model.slice_spec();
  spec.resolution = reference.h;
  MetricReport report;
  for (int i = 0; i < count; ++i) {
    Rng rng(step_seed(seed, i));
    const SlicePlane plane = random_plane(spec.mode, rng, spec.grain_axis);
    Tensor slice = model.render(plane, spec, state ? &*state : nullptr);
    for (Real& v : slice.data) v = std::clamp(v, Real(0), Real(1));
    report.values.push_back(sifid(reference, slice, extractor));
  }
  return report;
}

std::vector<double> image_sample(const Tensor& image, int size) {
  if (size < 1 || image.h < size || image.w < size || image.n != 1)
    throw std::invalid_argument("image_sample: cannot downsample " + image.shape_string() +
                                " to " + std::to_string(size));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(image.c) * size * size);
  for (int c = 0; c < image.c; ++c)
    for (int y = 0; y < size; ++y) {
      const int y0 = y * image.h / size, y1 = (y + 1) * image.h / size;
      for (int x = 0; x < size; ++x) {
        const int x0 = x * image.w / size, x1 = (x + 1) * image.w / size;
        double s = 0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx)
            s += image.data[(static_cast<std::size_t>(c) * image.h + yy) * image.w + xx];
        out.push_back(s / ((y1 - y0) * (x1 - x0)));
      }
    }
  return out;
}

double average_log_likelihood(const std::vector<std::vector<double>>& generated,
                              const std::vector<std::vector<double>>& ground_truth,
                              double bandwidth) {
  if (!(bandwidth > 0)) throw std::invalid_argument("likelihood: bandwidth must be > 0");
  check_sample_sets(generated, ground_truth);
  const double norm = log_kernel_norm(ground_truth.front().size(), bandwidth) -
                      std::log(static_cast<double>(ground_truth.size()));
  const double inv = 1.0 / (2 * bandwidth * bandwidth);
  std::vector<double> terms(ground_truth.size());
  double total = 0;
  for (const auto& g : generated) {
    for (std::size_t j = 0; j < ground_truth.size(); ++j)
      terms[j] = -squared_distance(g, ground_truth[j]) * inv;
    total += norm + log_sum_exp(terms);
  }
  return total / static_cast<double>(generated.size());
}

double bandwidth_grid_search(const std::vector<std::vector<double>>& samples,
                             const std::vector<double>& candidates) {
  if (candidates.size() < 2) throw std::invalid_argument("bandwidth search: need >= 2 candidates");
  if (samples.size() < 2) throw std::invalid_argument("bandwidth search: need >= 2 samples");
  check_sample_sets(samples, samples);
  const std::size_t n = samples.size();
  std::vector<double> d2(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d2[i * n + j] = squared_distance(samples[i], samples[j]);

  double best = candidates.front();
  double best_score = -std::numeric_limits<double>::infinity();
  bool have = false;
  std::vector<double> terms(n - 1);
  for (double h : candidates) {
    if (!(h > 0)) continue;
    const double norm = log_kernel_norm(samples.front().size(), h) - std::log(double(n - 1));
    double score = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t k = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) terms[k++] = -d2[i * n + j] / (2 * h * h);
      score += norm + log_sum_exp(terms);
    }
    score /= static_cast<double>(n);
    if (!have || score > best_score) {
      best = h;
      best_score = score;
      have = true;
    }
  }
  if (!have) throw std::invalid_argument("bandwidth search: no positive candidate");
  return best;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: samples are not paired");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  if (d.empty())
    throw std::invalid_argument("wilcoxon: every paired difference is zero; the test is undefined");
  const int n = static_cast<int>(d.size());

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Doubled average ranks keep tied ranks integral.
  std::vector<int> rank2(n);
  double tie_term = 0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int t = j - i + 1;
    for (int k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;
    tie_term += static_cast<double>(t) * t * t - t;
    i = j + 1;
  }
  long plus2 = 0, total2 = 0;
  for (int i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) plus2 += rank2[i];
  }
  const long stat2 = std::min(plus2, total2 - plus2);

  WilcoxonResult r;
  r.n = n;
  r.statistic = stat2 / 2.0;
  if (n <= 25) {
    // Distribution of the doubled positive-rank sum over all 2^n sign
    // patterns.
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1;
    long reach = 0;
    for (int i = 0; i < n; ++i) {
      for (long s = reach; s >= 0; --s)
        if (ways[s] != 0) ways[s + rank2[i]] += ways[s];
      reach += rank2[i];
    }
    double tail = 0;
    for (long s = 0; s <= stat2; ++s) tail += ways[s];
    r.p_value = std::min(1.0, 2 * tail / std::ldexp(1.0, n));
    r.exact = true;
  } else {
    const double nn = n;
    const double mean = nn * (nn + 1) / 4;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24 - tie_term / 48;
    const double z = (r.statistic - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return r;
}

std::unique_ptr<ConvStack> load_extractor(const std::string& spec,
                                          const std::string& expected_sha256) {
  if (spec.starts_with("random:")) {
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(spec.substr(7), &used);
      if (used != spec.size() - 7) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ConfigError(std::string(kSifidExtractorEnv) + ": \"" + spec +
                        "\" is not random:<unsigned seed>");
    }
    Rng rng(seed);
    return std::make_unique<ConvStack>("sifid", ConvStackArch::sifid_features(), &rng);
  }
  if (!expected_sha256.empty()) {
    const std::string actual = file_sha256(spec);
    if (actual != expected_sha256)
      throw CheckpointError("extractor " + spec + " has SHA-256 " + actual + ", expected " +
                            expected_sha256);
  }
  detail::Reader r(detail::read_file(spec, "extractor"), "extractor " + spec);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kExtractorMagic, 4) != 0)
    throw CheckpointError(spec + " is not a GGFX extractor file");
  if (r.u32("version") != kExtractorVersion)
    throw CheckpointError(spec + ": unsupported extractor version");
  ConvStackArch arch;
  arch.input_size = 0;
  arch.in_channels = static_cast<int>(r.u32("input channels"));
  const std::uint32_t layers = r.u32("layer count");
  if (layers == 0 || layers > 64) throw CheckpointError(spec + ": implausible layer count");
  for (std::uint32_t i = 0; i < layers; ++i) {
    ConvSpec c;
    c.out_channels = static_cast<int>(r.u32("layer channels"));
    c.kernel = static_cast<int>(r.u32("layer kernel"));
    c.pool_after = r.u32("layer pooling") != 0;
    if (c.out_channels < 1 || c.kernel < 1 || c.kernel > 15)
      throw CheckpointError(spec + ": implausible layer shape");
    arch.convs.push_back(c);
  }
  auto stack = std::make_unique<ConvStack>("extractor", arch, nullptr);
  for (Param* p : stack->params()) {
    detail::Record rec = r.record();
    if (rec.name != p->name || rec.shape != p->shape)
      throw CheckpointError(spec + ": record \"" + rec.name + "\" does not match layer " +
                            p->name);
    p->value = std::move(rec.data);
  }
  if (!r.at_end()) throw CheckpointError(spec + " is corrupt: trailing bytes");
  return stack;
}

std::unique_ptr<ConvStack> extractor_from_env() {
  const char* spec = std::getenv(kSifidExtractorEnv);
  if (!spec || !*spec)
    throw ConfigError(std::string("SIFID needs a feature extractor: set ") + kSifidExtractorEnv +
                      " to a GGFX extractor file, or to random:<seed> for the built-in "
                      "random-weight probe");
  const char* sha = std::getenv("GRAMGAN_SIFID_EXTRACTOR_SHA256");
  return load_extractor(spec, sha ? sha : "");
}

void save_extractor(const ConvStack& stack, const std::string& path) {
  const ConvStackArch& arch = stack.arch();
  if (!arch.dense.empty()) throw std::invalid_argument("save_extractor: dense heads are not stored");
  ConvStack copy("extractor", arch, nullptr);
  const ConstParamList src = stack.params();
  const ParamList dst = copy.params();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;

  detail::Writer w;
  w.bytes(kExtractorMagic, 4);
  w.u32(kExtractorVersion);
  w.u32(static_cast<std::uint32_t>(arch.in_channels));
  w.u32(static_cast<std::uint32_t>(arch.convs.size()));
  for (const ConvSpec& c : arch.convs) {
    w.u32(static_cast<std::uint32_t>(c.out_channels));
    w.u32(static_cast<std::uint32_t>(c.kernel));
    w.u32(c.pool_after ? 1 : 0);
  }
  for (const Param* p : dst) w.record(p->name, p->shape, p->value);
  detail::write_file(path, w.buffer(), "extractor");
}

}  // namespace gramgan
