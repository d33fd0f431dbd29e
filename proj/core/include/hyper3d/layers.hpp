#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "hyper3d/random.hpp"
#include "hyper3d/tensor.hpp"

// Layer primitives with explicit forward/backward passes. Activations are
// channels-last; the leading axis is always the batch. All convolutions use
// stride 1. Backward functions accumulate into parameter gradients (so a
// caller can sum over several calls) and overwrite the input gradient.
namespace hyper3d::layers {

enum class Mode { kTrain, kEval };

/// Zero padding per spatial axis (height, width, depth).
struct Padding3 {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t d = 1;
};

// input (b, h, w, d, ci), kernel (kh, kw, kd, ci, co), bias (co)
Tensor conv3d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      Padding3 pad = {});
void conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                     Padding3 pad, Tensor* input_grad, Tensor& kernel_grad, Tensor& bias_grad);

// input (b, h, w, ci), kernel (kh, kw, ci, co), bias (co)
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      std::size_t padding);
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                     std::size_t padding, Tensor* input_grad, Tensor& kernel_grad,
                     Tensor& bias_grad);

// Depthwise stage of a separable convolution, multiplier 1, no bias.
// input (b, h, w, c), kernel (kh, kw, c)
Tensor depthwise2d_forward(const Tensor& input, const Tensor& kernel, std::size_t padding);
void depthwise2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                          std::size_t padding, Tensor* input_grad, Tensor& kernel_grad);

// 1x1 convolution: (..., ci) x (ci, co) + bias (co)
Tensor pointwise_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void pointwise_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad,
                        Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad);

/// Depthwise 3x3 followed by pointwise 1x1; bias on the pointwise stage only.
Tensor sepconv2d_forward(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise,
                         const Tensor& bias, std::size_t padding);

void relu_inplace(Tensor& t);
/// Gradient through a ReLU given its output.
Tensor relu_backward(const Tensor& output, const Tensor& output_grad);

/// Per-channel statistics over every non-channel axis.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> variance;  // population (biased)
};

struct BatchNormCache {
  Mode mode = Mode::kEval;
  Tensor normalized;            // x_hat
  std::vector<double> inv_std;  // 1 / sqrt(var + eps), batch or running
  BatchStats batch;             // filled in train mode
};

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         const Tensor& running_mean, const Tensor& running_var, Mode mode,
                         double epsilon, BatchNormCache* cache = nullptr);
void batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& output_grad,
                        Tensor* input_grad, Tensor& gamma_grad, Tensor& beta_grad);
/// running <- momentum * running + (1 - momentum) * batch
void update_running_stats(const BatchStats& batch, double momentum, Tensor& running_mean,
                          Tensor& running_var);

/// Inverted dropout. In train mode each element is dropped with probability
/// `rate` and survivors are scaled by 1 / (1 - rate); eval mode is identity.
/// The keep mask is written to `mask` so backward (and replays) can reuse it.
Tensor dropout_forward(const Tensor& input, double rate, Mode mode, Rng* rng,
                       std::vector<std::uint8_t>* mask);
Tensor dropout_backward(const Tensor& output_grad, const std::vector<std::uint8_t>& mask,
                        double rate, Mode mode);

/// Joins along the last axis; every other axis must agree.
Tensor concat(const Tensor& a, const Tensor& b);
/// Inverse of concat: first `channels` of the last axis, then the rest.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t channels);

// Bias-free fully connected: (b, k) x (k, o)
Tensor dense_forward(const Tensor& input, const Tensor& weights);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad,
                    Tensor* input_grad, Tensor& weight_grad);

}  // namespace hyper3d::layers
