#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hyper3d/layers.hpp"
#include "hyper3d/tensor.hpp"

namespace hyper3d {

using layers::Mode;

/// Architecture hyperparameters. Defaults reproduce the published network
/// for 5x5 windows of 8 channels; the filter widths can be narrowed to build
/// cheap surrogates with the same topology.
struct ModelConfig {
  enum class Head { kConv, kConvDense };

  std::size_t window = 5;    // W
  std::size_t channels = 8;  // n
  std::size_t out_size = 5;  // N: W, W - 2 or 1
  double dropout_rate = 0.5;
  std::size_t conv3d_filters = 32;
  std::vector<std::size_t> sepconv_filters{512, 320, 256, 128, 32};
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  Head head() const { return out_size == 1 ? Head::kConvDense : Head::kConv; }
  std::size_t head_padding() const { return out_size == window ? 1 : 0; }
  /// Channels after flattening the 3-D stage: 4 filters blocks x depth n.
  std::size_t reshape_channels() const { return 4 * conv3d_filters * channels; }
  /// Cells fed to the dense head when N = 1.
  std::size_t dense_inputs() const { return (window - 2) * (window - 2); }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;  // "<layer>/<tensor>"
  Tensor value;
  bool trainable = true;
};

/// Every tensor of the network, including batch-norm running statistics,
/// in a fixed order.
class NetworkParams {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return blocks_.size(); }
  ParamBlock& operator[](std::size_t i) { return blocks_[i]; }
  const ParamBlock& operator[](std::size_t i) const { return blocks_[i]; }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

  std::size_t trainable_count() const;

  /// Bumped whenever values change; forward caches remember it.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  bool operator==(const NetworkParams& other) const { return blocks_ == other.blocks_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::uint64_t version_ = 0;
};

inline bool operator==(const ParamBlock& a, const ParamBlock& b) {
  return a.name == b.name && a.trainable == b.trainable && a.value == b.value;
}

/// One gradient tensor per parameter block; empty for non-trainable blocks.
using Gradients = std::vector<Tensor>;

struct LayerTrace {
  std::string layer;
  Shape shape;  // without the batch axis
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Intermediate tensors of one forward pass, consumed by backward.
struct ForwardCache {
  struct ConvBlock {
    Tensor activated;  // ReLU(conv)
    layers::BatchNormCache bn;
    Tensor output;
  };
  struct SepBlock {
    Tensor input;
    Tensor depthwise;
    Tensor activated;
    layers::BatchNormCache bn;
    Tensor output;
  };

  Mode mode = Mode::kEval;
  std::uint64_t params_version = 0;
  bool valid = false;

  Tensor input;
  std::array<ConvBlock, 4> conv;
  std::array<Tensor, 3> concat;  // 2f, 3f, 4f channels
  std::array<std::vector<std::uint8_t>, 3> dropout_masks;
  std::array<SepBlock, 5> sep;
  Tensor head_activated;
  Tensor flattened;  // N = 1 only
  Tensor output;
  std::vector<LayerTrace> trace;
};

struct LayerParamCount {
  std::string layer;
  std::size_t trainable = 0;
};

/// Closed-form trainable parameter counts per layer, in network order.
std::vector<LayerParamCount> count_params(const ModelConfig& config);
std::size_t total_params(const std::vector<LayerParamCount>& counts);

/// Weights plus biases of a dense layer; used to size the rejected
/// alternative of a fully connected N x N head.
std::size_t dense_param_count(std::size_t inputs, std::size_t outputs, bool bias = true);

/// 3-D/2-D CNN regressing an N x N yield patch from a W x W x n window.
///
/// Stages: four Conv3D+ReLU+BN blocks with dense concatenation
/// (f, 2f, 3f, 4f channels), flatten depth into channels, then five
/// SepConv2D+ReLU+BN blocks with dropout before the first, third and fourth,
/// and finally a Conv2D+ReLU head (followed by a bias-free dense unit and
/// ReLU when N = 1).
class Hyper3DNetReg {
 public:
  Hyper3DNetReg(ModelConfig config, std::uint64_t seed);
  Hyper3DNetReg(ModelConfig config, NetworkParams params);

  const ModelConfig& config() const { return config_; }
  const NetworkParams& params() const { return params_; }
  NetworkParams& params() { return params_; }

  Shape input_shape(std::size_t batch) const;
  Shape output_shape(std::size_t batch) const;

  /// x is (b, W, W, n, 1). Returns (b, N, N), or (b, 1) when N = 1.
  /// Dropout masks are drawn from `dropout_seed`, so repeating a call
  /// replays them exactly.
  Tensor forward(const Tensor& x, Mode mode, ForwardCache* cache = nullptr,
                 std::uint64_t dropout_seed = 0) const;

  Gradients backward(const ForwardCache& cache, const Tensor& output_grad,
                     Tensor* input_grad = nullptr) const;

  /// Folds a train-mode pass's batch statistics into the running averages.
  void commit_batch_statistics(const ForwardCache& cache);

  Gradients zero_gradients() const;

 private:
  struct ConvBlockIndex {
    std::size_t kernel, bias, gamma, beta, mean, var;
  };
  struct SepBlockIndex {
    std::size_t depthwise, pointwise, bias, gamma, beta, mean, var;
  };

  void build(std::uint64_t seed, bool initialize);
  void resolve_indices();

  ModelConfig config_;
  NetworkParams params_;
  std::array<ConvBlockIndex, 4> conv_{};
  std::array<SepBlockIndex, 5> sep_{};
  std::size_t head_kernel_ = 0, head_bias_ = 0, dense_ = 0;
};

}  // namespace hyper3d
