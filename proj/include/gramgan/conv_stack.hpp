#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gramgan/layers.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan {

/// Ordered post-activation conv maps, one Tensor [batch x N_l x H_l x W_l]
/// per conv layer.
using FeatureStack = std::vector<Tensor>;

/// Opaque record of a forward pass kept for a later backward pass.
class FeatureTape {
 public:
  virtual ~FeatureTape() = default;
};

/// Anything that maps a batch of images (normalized to [-1, 1]) to a
/// FeatureStack and can pull feature gradients back to the input. The critic
/// is the default implementation; a pretrained classifier adapter can be
/// plugged in for style losses or SIFID.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual FeatureStack extract(const Tensor& images, std::unique_ptr<FeatureTape>* tape) const = 0;
  virtual Tensor input_gradient(const FeatureTape& tape,
                                const FeatureStack& feature_grads) const = 0;
};

struct ConvSpec {
  int out_channels = 0;
  int kernel = 3;
  bool pool_after = false;
};

/// Layer layout of a conv + average-pool stack with an optional dense head.
struct ConvStackArch {
  int in_channels = 3;
  int input_size = 128;
  std::vector<ConvSpec> convs;
  /// Dense layer widths; every layer but the last is followed by LReLU.
  std::vector<int> dense;

  /// Critic layout. input_size 128 with divisor 1 is exactly the published
  /// 9-conv / 7-pool stack. Smaller power-of-two inputs keep its leading
  /// layers and finish with the 2x2 conv + pool; divisor shrinks widths.
  static ConvStackArch critic(int input_size = 128, int width_divisor = 1);
  /// Encoder layout (7 conv + pool stages, dense 256 -> latent).
  static ConvStackArch encoder(int input_size = 128, int latent_dim = 32, int width_divisor = 1);
  /// Three-conv feature stack used for SIFID when no external extractor is set.
  static ConvStackArch sifid_features();

  /// Spatial size seen by each conv layer.
  std::vector<int> conv_sizes() const;
  int flat_size() const;
};

class ConvStack : public FeatureExtractor {
 public:
  struct Tape : FeatureTape {
    Tensor input_shape;  // dimensions of the input batch, no data
    std::vector<Tensor> conv_in;
    std::vector<Tensor> conv_out;
    std::vector<std::vector<Real>> dense_in;
    std::vector<std::vector<Real>> dense_pre;
    Tensor output;
  };

  /// Upstream gradients at every pre-activation, recorded by backward().
  struct Deltas {
    std::vector<Tensor> conv;
    std::vector<std::vector<Real>> dense;
  };

  ConvStack() = default;
  ConvStack(const std::string& prefix, ConvStackArch arch, Rng* rng);

  const ConvStackArch& arch() const { return arch_; }
  int output_dim() const { return arch_.dense.empty() ? 0 : arch_.dense.back(); }

  /// Returns [batch x output_dim x 1 x 1]. Fills tape when non-null.
  Tensor forward(const Tensor& images, Tape* tape) const;

  /// Backpropagates d_output ([batch x output_dim], may be empty when there
  /// is no head) plus optional per-layer feature gradients. Parameter
  /// gradients accumulate when accumulate_params is set; the input gradient
  /// is returned when want_input is set.
  Tensor backward(const Tape& tape, const Tensor& d_output, const FeatureStack* d_features,
                  bool accumulate_params, bool want_input, Deltas* deltas = nullptr);

  /// Input gradient of sum(d_output . output); parameters untouched.
  Tensor input_gradient_of_output(const Tape& tape, const Tensor& d_output) const;

  /// Adds d/dtheta of the directional derivative <grad_x output, direction>
  /// to the weight gradients, given the deltas of a backward pass of the
  /// output (with unit upstream gradient) at the same inputs.
  void accumulate_directional_grads(const Tape& tape, const Deltas& deltas,
                                    const Tensor& direction);

  FeatureStack extract(const Tensor& images, std::unique_ptr<FeatureTape>* tape) const override;
  Tensor input_gradient(const FeatureTape& tape, const FeatureStack& feature_grads) const override;

  ParamList params();
  ConstParamList params() const;

  std::vector<Conv2d> convs;
  std::vector<Dense> dense;

 private:
  void check_input(const Tensor& images) const;
  Tensor backward_impl(const Tape& tape, const Tensor& d_output, const FeatureStack* d_features,
                       ConvStack* param_sink, bool want_input, Deltas* deltas) const;

  ConvStackArch arch_;
};

}  // namespace gramgan
