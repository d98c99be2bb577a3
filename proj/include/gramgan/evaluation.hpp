#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gramgan/conv_stack.hpp"
#include "gramgan/model.hpp"

namespace gramgan {

/// Per-sample values with statistics derived from them on demand.
struct MetricReport {
  std::vector<double> values;

  std::size_t count() const { return values.size(); }
  double mean() const;
  /// Sample standard deviation (n - 1); 0 for fewer than two values.
  double stddev() const;
};

/// Gaussian fitted to a set of feature vectors.
struct FeatureGaussian {
  std::vector<double> mean;        // d
  std::vector<double> covariance;  // d x d, row-major
  int dim = 0;
};

/// Fits mean and covariance to the spatial positions of one feature map
/// [1 x C x H x W]; each position is one C-dimensional sample.
FeatureGaussian fit_gaussian(const Tensor& feature_map);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), with jitter * I added to
/// both covariances. Small negative results from round-off clip to 0.
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b,
                        double jitter = 1e-6);

/// Single-image FID between two same-sized [1 x 3 x H x W] images in [0, 1],
/// using the last feature map of the extractor.
double sifid(const Tensor& reference, const Tensor& sample, const FeatureExtractor& extractor);

/// Renders `count` random-orientation slices at the reference resolution,
/// one per derived seed, and scores each against the reference. Conditional
/// models are conditioned on the reference's central patch.
MetricReport sifid_protocol(const Model& model, const Tensor& reference,
                            const FeatureExtractor& extractor, int count = 50,
                            std::uint64_t seed = 0);

/// Box-downsamples an image to size x size and flattens it (channel-major)
/// into one sample vector for the likelihood estimate.
std::vector<double> image_sample(const Tensor& image, int size = 32);

/// Mean over generated samples of log p(g), where p is an isotropic Gaussian
/// Parzen window of width `bandwidth` centred on every ground-truth sample.
double average_log_likelihood(const std::vector<std::vector<double>>& generated,
                              const std::vector<std::vector<double>>& ground_truth,
                              double bandwidth);

/// Candidate with the highest leave-one-out likelihood on `samples`; ties
/// keep the earliest candidate.
double bandwidth_grid_search(const std::vector<std::vector<double>>& samples,
                             const std::vector<double>& candidates);

struct WilcoxonResult {
  /// min(W+, W-) over the non-zero differences.
  double statistic = 0;
  double p_value = 1;
  /// Number of non-zero differences.
  int n = 0;
  bool exact = false;
};

/// Two-sided paired signed-rank test on a - b. Zero differences are
/// dropped; ties share average ranks. Exact for n <= 25, otherwise the
/// tie-corrected normal approximation.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

/// Environment key naming the SIFID extractor: a GGFX file path, or
/// "random:<seed>" for the built-in random-weight probe.
inline constexpr const char* kSifidExtractorEnv = "GRAMGAN_SIFID_EXTRACTOR";

/// Resolves an extractor spec (see kSifidExtractorEnv). expected_sha256, if
/// non-empty, pins the file's content hash.
std::unique_ptr<ConvStack> load_extractor(const std::string& spec,
                                          const std::string& expected_sha256 = "");

/// Reads kSifidExtractorEnv (and GRAMGAN_SIFID_EXTRACTOR_SHA256). Throws an
/// error naming the key when it is unset.
std::unique_ptr<ConvStack> extractor_from_env();

/// Writes a conv stack (no dense head) as a GGFX extractor file.
void save_extractor(const ConvStack& stack, const std::string& path);

}  // namespace gramgan
