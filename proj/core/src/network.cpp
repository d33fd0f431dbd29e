#include "hyper3d/network.hpp"

#include <cmath>
#include <stdexcept>

#include "hyper3d/random.hpp"

namespace hyper3d {

using layers::BatchNormCache;

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("model config: " + why); };
  if (window < 3 || window % 2 == 0) fail("window must be odd and >= 3");
  if (channels == 0) fail("channels must be positive");
  if (out_size % 2 == 0 || out_size > window) fail("N must be odd and <= W");
  if (out_size != window && out_size != window - 2 && out_size != 1) fail("N must be W, W - 2 or 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout rate must be in [0, 1)");
  if (conv3d_filters == 0) fail("conv3d filters must be positive");
  if (sepconv_filters.size() != 5) fail("expected five separable-convolution widths");
  for (std::size_t f : sepconv_filters) {
    if (f == 0) fail("separable-convolution widths must be positive");
  }
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("batch-norm momentum must be in [0, 1)");
  if (!(bn_epsilon > 0.0)) fail("batch-norm epsilon must be positive");
}

std::size_t NetworkParams::add(std::string name, Tensor value, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter block " + name);
  blocks_.push_back({std::move(name), std::move(value), trainable});
  return blocks_.size() - 1;
}

std::size_t NetworkParams::index(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter block named " + std::string(name));
}

bool NetworkParams::contains(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

std::size_t NetworkParams::trainable_count() const {
  std::size_t total = 0;
  for (const auto& b : blocks_) {
    if (b.trainable) total += b.value.size();
  }
  return total;
}

std::size_t dense_param_count(std::size_t inputs, std::size_t outputs, bool bias) {
  return inputs * outputs + (bias ? outputs : 0);
}

std::vector<LayerParamCount> count_params(const ModelConfig& config) {
  config.validate();
  std::vector<LayerParamCount> counts;
  const std::size_t f = config.conv3d_filters;
  const std::array<std::size_t, 4> conv_in{1, f, 2 * f, 3 * f};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name = "conv3d_" + std::to_string(k + 1);
    counts.push_back({name, 27 * conv_in[k] * f + f});
    counts.push_back({name + "_bn", 2 * f});
  }
  std::size_t c_in = config.reshape_channels();
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t c_out = config.sepconv_filters[k];
    const std::string name = "sepconv2d_" + std::to_string(k + 1);
    counts.push_back({name, 9 * c_in + c_in * c_out + c_out});
    counts.push_back({name + "_bn", 2 * c_out});
    c_in = c_out;
  }
  counts.push_back({"head_conv2d", 9 * c_in * 1 + 1});
  if (config.head() == ModelConfig::Head::kConvDense) {
    counts.push_back({"head_dense", dense_param_count(config.dense_inputs(), 1, false)});
  }
  return counts;
}

std::size_t total_params(const std::vector<LayerParamCount>& counts) {
  std::size_t total = 0;
  for (const auto& c : counts) total += c.trainable;
  return total;
}

namespace {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Kaiming-style uniform bound for ReLU layers.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  return uniform_tensor(std::move(shape), -limit, limit, rng);
}

std::string conv_name(std::size_t k) { return "conv3d_" + std::to_string(k + 1); }
std::string sep_name(std::size_t k) { return "sepconv2d_" + std::to_string(k + 1); }

// Sep block k is preceded by dropout mask slot dropout_slot[k] (or none).
constexpr std::array<int, 5> kDropoutSlot{0, -1, 1, 2, -1};

}  // namespace

Hyper3DNetReg::Hyper3DNetReg(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build(seed, true);
}

Hyper3DNetReg::Hyper3DNetReg(ModelConfig config, NetworkParams params)
    : config_(std::move(config)) {
  config_.validate();
  build(0, false);
  if (params.size() != params_.size()) {
    throw std::invalid_argument("parameter set has " + std::to_string(params.size()) +
                                " blocks, architecture expects " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const ParamBlock& want = params_[i];
    const ParamBlock& got = params[i];
    if (want.name != got.name || want.value.shape() != got.value.shape() ||
        want.trainable != got.trainable) {
      throw std::invalid_argument("parameter block " + std::to_string(i) + " is " + got.name +
                                  to_string(got.value.shape()) + ", expected " + want.name +
                                  to_string(want.value.shape()));
    }
  }
  params_ = std::move(params);
  resolve_indices();
}

void Hyper3DNetReg::build(std::uint64_t seed, bool initialize) {
  Rng rng(seed);
  auto weights = [&](Shape shape, std::size_t fan_in) {
    return initialize ? fan_in_uniform(std::move(shape), fan_in, rng) : Tensor(std::move(shape));
  };
  auto add_bn = [&](const std::string& layer, std::size_t c) {
    params_.add(layer + "_bn/gamma", Tensor({c}, 1.0));
    params_.add(layer + "_bn/beta", Tensor({c}, 0.0));
    params_.add(layer + "_bn/running_mean", Tensor({c}, 0.0), false);
    params_.add(layer + "_bn/running_var", Tensor({c}, 1.0), false);
  };

  const std::size_t f = config_.conv3d_filters;
  const std::array<std::size_t, 4> conv_in{1, f, 2 * f, 3 * f};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name = conv_name(k);
    params_.add(name + "/kernel", weights({3, 3, 3, conv_in[k], f}, 27 * conv_in[k]));
    params_.add(name + "/bias", Tensor({f}, 0.0));
    add_bn(name, f);
  }
  std::size_t c_in = config_.reshape_channels();
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t c_out = config_.sepconv_filters[k];
    const std::string name = sep_name(k);
    params_.add(name + "/depthwise", weights({3, 3, c_in}, 9));
    params_.add(name + "/pointwise", weights({c_in, c_out}, c_in));
    params_.add(name + "/bias", Tensor({c_out}, 0.0));
    add_bn(name, c_out);
    c_in = c_out;
  }
  params_.add("head_conv2d/kernel", weights({3, 3, c_in, 1}, 9 * c_in));
  params_.add("head_conv2d/bias", Tensor({1}, 0.0));
  if (config_.head() == ModelConfig::Head::kConvDense) {
    // Non-negative start so the dense unit begins as a weighted average of
    // the (non-negative) head activations rather than a dead ReLU.
    const std::size_t k = config_.dense_inputs();
    params_.add("head_dense/kernel",
                initialize ? uniform_tensor({k, 1}, 0.0, 2.0 / static_cast<double>(k), rng)
                           : Tensor({k, 1}));
  }
  resolve_indices();
}

void Hyper3DNetReg::resolve_indices() {
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name = conv_name(k);
    conv_[k] = {params_.index(name + "/kernel"),          params_.index(name + "/bias"),
                params_.index(name + "_bn/gamma"),        params_.index(name + "_bn/beta"),
                params_.index(name + "_bn/running_mean"), params_.index(name + "_bn/running_var")};
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const std::string name = sep_name(k);
    sep_[k] = {params_.index(name + "/depthwise"),       params_.index(name + "/pointwise"),
               params_.index(name + "/bias"),            params_.index(name + "_bn/gamma"),
               params_.index(name + "_bn/beta"),         params_.index(name + "_bn/running_mean"),
               params_.index(name + "_bn/running_var")};
  }
  head_kernel_ = params_.index("head_conv2d/kernel");
  head_bias_ = params_.index("head_conv2d/bias");
  if (config_.head() == ModelConfig::Head::kConvDense) dense_ = params_.index("head_dense/kernel");
}

Shape Hyper3DNetReg::input_shape(std::size_t batch) const {
  return {batch, config_.window, config_.window, config_.channels, 1};
}

Shape Hyper3DNetReg::output_shape(std::size_t batch) const {
  if (config_.head() == ModelConfig::Head::kConvDense) return {batch, 1};
  return {batch, config_.out_size, config_.out_size};
}

Gradients Hyper3DNetReg::zero_gradients() const {
  Gradients grads;
  grads.reserve(params_.size());
  for (const auto& block : params_) {
    grads.push_back(block.trainable ? Tensor(block.value.shape()) : Tensor());
  }
  return grads;
}

Tensor Hyper3DNetReg::forward(const Tensor& x, Mode mode, ForwardCache* cache_out,
                              std::uint64_t dropout_seed) const {
  const std::size_t batch = x.rank() > 0 ? x.dim(0) : 0;
  if (batch == 0 || x.shape() != input_shape(batch)) {
    throw ShapeError("network input " + to_string(x.shape()) + ", expected " +
                     to_string(input_shape(batch == 0 ? 1 : batch)));
  }
  ForwardCache local;
  ForwardCache& cache = cache_out ? *cache_out : local;
  cache = ForwardCache{};
  cache.mode = mode;
  cache.params_version = params_.version();
  cache.input = x;

  const std::size_t W = config_.window, n = config_.channels, f = config_.conv3d_filters;
  const double eps = config_.bn_epsilon;
  auto& trace = cache.trace;
  trace.push_back({"Input", {W, W, n, 1}});
  auto p = [&](std::size_t i) -> const Tensor& { return params_[i].value; };
  auto strip = [](const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); };

  auto conv_block = [&](std::size_t k, const Tensor& in) {
    const ConvBlockIndex& ix = conv_[k];
    ForwardCache::ConvBlock& blk = cache.conv[k];
    blk.activated = layers::conv3d_forward(in, p(ix.kernel), p(ix.bias), {1, 1, 1});
    layers::relu_inplace(blk.activated);
    blk.output = layers::batchnorm_forward(blk.activated, p(ix.gamma), p(ix.beta), p(ix.mean),
                                           p(ix.var), mode, eps, &blk.bn);
    trace.push_back({"Conv3D + ReLU + BN", strip(blk.output)});
  };

  conv_block(0, x);
  conv_block(1, cache.conv[0].output);
  cache.concat[0] = layers::concat(cache.conv[0].output, cache.conv[1].output);
  trace.push_back({"CONCAT", strip(cache.concat[0])});
  conv_block(2, cache.concat[0]);
  cache.concat[1] = layers::concat(cache.concat[0], cache.conv[2].output);
  trace.push_back({"CONCAT", strip(cache.concat[1])});
  conv_block(3, cache.concat[1]);
  cache.concat[2] = layers::concat(cache.concat[1], cache.conv[3].output);
  trace.push_back({"CONCAT", strip(cache.concat[2])});
  if (cache.concat[2].shape().back() != 4 * f) throw std::logic_error("dense concat progression broken");

  // (b, W, W, n, 4f) -> (b, W, W, n * 4f): depth-major, then channel.
  Tensor h = cache.concat[2].reshaped({batch, W, W, config_.reshape_channels()});
  trace.push_back({"Reshape", strip(h)});

  Rng rng(dropout_seed);
  const double rate = config_.dropout_rate;
  for (std::size_t k = 0; k < 5; ++k) {
    if (kDropoutSlot[k] >= 0) {
      h = layers::dropout_forward(h, rate, mode, &rng,
                                  &cache.dropout_masks[static_cast<std::size_t>(kDropoutSlot[k])]);
      trace.push_back({"Dropout", strip(h)});
    }
    const SepBlockIndex& ix = sep_[k];
    ForwardCache::SepBlock& blk = cache.sep[k];
    blk.input = std::move(h);
    blk.depthwise = layers::depthwise2d_forward(blk.input, p(ix.depthwise), 1);
    blk.activated = layers::pointwise_forward(blk.depthwise, p(ix.pointwise), p(ix.bias));
    layers::relu_inplace(blk.activated);
    blk.output = layers::batchnorm_forward(blk.activated, p(ix.gamma), p(ix.beta), p(ix.mean),
                                           p(ix.var), mode, eps, &blk.bn);
    trace.push_back({"SepConv2D + ReLU + BN", strip(blk.output)});
    h = blk.output;
  }

  cache.head_activated =
      layers::conv2d_forward(cache.sep[4].output, p(head_kernel_), p(head_bias_), config_.head_padding());
  layers::relu_inplace(cache.head_activated);
  trace.push_back({"Conv2D + ReLU", strip(cache.head_activated)});

  if (config_.head() == ModelConfig::Head::kConv) {
    cache.output = cache.head_activated.reshaped({batch, config_.out_size, config_.out_size});
  } else {
    const std::size_t k = config_.dense_inputs();
    cache.flattened = cache.head_activated.reshaped({batch, k, 1});
    trace.push_back({"Reshape", strip(cache.flattened)});
    cache.output = layers::dense_forward(cache.flattened.reshaped({batch, k}), p(dense_));
    layers::relu_inplace(cache.output);
    trace.push_back({"FC", strip(cache.output)});
  }
  cache.valid = true;
  return cache.output;
}

Gradients Hyper3DNetReg::backward(const ForwardCache& cache, const Tensor& output_grad,
                                  Tensor* input_grad) const {
  if (!cache.valid) throw StaleCacheError("backward called without a forward cache");
  if (cache.params_version != params_.version()) {
    throw StaleCacheError("forward cache predates the current parameters");
  }
  if (output_grad.shape() != cache.output.shape()) {
    throw ShapeError("output gradient " + to_string(output_grad.shape()) + ", expected " +
                     to_string(cache.output.shape()));
  }
  Gradients grads = zero_gradients();
  const std::size_t batch = cache.input.dim(0);
  const std::size_t W = config_.window, n = config_.channels, f = config_.conv3d_filters;
  const double rate = config_.dropout_rate;
  auto p = [&](std::size_t i) -> const Tensor& { return params_[i].value; };

  // Head.
  Tensor g;
  if (config_.head() == ModelConfig::Head::kConv) {
    g = output_grad.reshaped(cache.head_activated.shape());
  } else {
    const std::size_t k = config_.dense_inputs();
    const Tensor dense_grad = layers::relu_backward(cache.output, output_grad);
    Tensor flat_grad;
    layers::dense_backward(cache.flattened.reshaped({batch, k}), p(dense_), dense_grad, &flat_grad,
                           grads[dense_]);
    g = std::move(flat_grad).reshaped(cache.head_activated.shape());
  }
  g = layers::relu_backward(cache.head_activated, g);
  Tensor sep_grad;
  layers::conv2d_backward(cache.sep[4].output, p(head_kernel_), g, config_.head_padding(), &sep_grad,
                          grads[head_kernel_], grads[head_bias_]);

  // Separable stage, last block first.
  for (std::size_t k = 5; k-- > 0;) {
    const SepBlockIndex& ix = sep_[k];
    const ForwardCache::SepBlock& blk = cache.sep[k];
    Tensor act_grad;
    layers::batchnorm_backward(blk.bn, p(ix.gamma), sep_grad, &act_grad, grads[ix.gamma],
                               grads[ix.beta]);
    act_grad = layers::relu_backward(blk.activated, act_grad);
    Tensor dw_grad;
    layers::pointwise_backward(blk.depthwise, p(ix.pointwise), act_grad, &dw_grad,
                               grads[ix.pointwise], grads[ix.bias]);
    Tensor in_grad;
    layers::depthwise2d_backward(blk.input, p(ix.depthwise), dw_grad, 1, &in_grad,
                                 grads[ix.depthwise]);
    if (kDropoutSlot[k] >= 0) {
      in_grad = layers::dropout_backward(
          in_grad, cache.dropout_masks[static_cast<std::size_t>(kDropoutSlot[k])], rate, cache.mode);
    }
    sep_grad = std::move(in_grad);
  }

  // 3-D stage: unwind the dense concatenations.
  auto conv_block_backward = [&](std::size_t k, const Tensor& block_input, const Tensor& out_grad,
                                 Tensor* in_grad) {
    const ConvBlockIndex& ix = conv_[k];
    const ForwardCache::ConvBlock& blk = cache.conv[k];
    Tensor act_grad;
    layers::batchnorm_backward(blk.bn, p(ix.gamma), out_grad, &act_grad, grads[ix.gamma],
                               grads[ix.beta]);
    act_grad = layers::relu_backward(blk.activated, act_grad);
    layers::conv3d_backward(block_input, p(ix.kernel), act_grad, {1, 1, 1}, in_grad,
                            grads[ix.kernel], grads[ix.bias]);
  };
  auto add_into = [](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };

  Tensor cat3_grad = std::move(sep_grad).reshaped({batch, W, W, n, 4 * f});
  auto [cat2_grad, y4_grad] = layers::split_channels(cat3_grad, 3 * f);
  Tensor tmp;
  conv_block_backward(3, cache.concat[1], y4_grad, &tmp);
  add_into(cat2_grad, tmp);
  auto [cat1_grad, y3_grad] = layers::split_channels(cat2_grad, 2 * f);
  conv_block_backward(2, cache.concat[0], y3_grad, &tmp);
  add_into(cat1_grad, tmp);
  auto [y1_grad, y2_grad] = layers::split_channels(cat1_grad, f);
  conv_block_backward(1, cache.conv[0].output, y2_grad, &tmp);
  add_into(y1_grad, tmp);
  conv_block_backward(0, cache.input, y1_grad, input_grad);
  return grads;
}

void Hyper3DNetReg::commit_batch_statistics(const ForwardCache& cache) {
  if (cache.mode != Mode::kTrain) return;
  const double momentum = config_.bn_momentum;
  for (std::size_t k = 0; k < 4; ++k) {
    layers::update_running_stats(cache.conv[k].bn.batch, momentum, params_[conv_[k].mean].value,
                                 params_[conv_[k].var].value);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    layers::update_running_stats(cache.sep[k].bn.batch, momentum, params_[sep_[k].mean].value,
                                 params_[sep_[k].var].value);
  }
  params_.touch();
}

}  // namespace hyper3d
