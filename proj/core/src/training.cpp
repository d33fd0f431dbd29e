#include "hyper3d/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "hyper3d/random.hpp"

namespace hyper3d {

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  if (pred.size() == 0) throw ShapeError("mse_loss: empty tensors");
  LossResult out{0.0, Tensor(pred.shape())};
  const double count = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d / count;
  }
  out.loss /= count;
  return out;
}

double adadelta_step(double& x, double g, AdadeltaSlot& slot, const AdadeltaConfig& config) {
  const double rho = config.rho, eps = config.epsilon;
  slot.mean_sq_grad = rho * slot.mean_sq_grad + (1.0 - rho) * g * g;
  const double dx = -std::sqrt(slot.mean_sq_delta + eps) / std::sqrt(slot.mean_sq_grad + eps) * g;
  slot.mean_sq_delta = rho * slot.mean_sq_delta + (1.0 - rho) * dx * dx;
  x += dx;
  return dx;
}

Adadelta::Adadelta(const NetworkParams& params, AdadeltaConfig config) : config_(config) {
  slots_.reserve(params.size());
  for (const ParamBlock& block : params) {
    slots_.emplace_back(block.trainable ? block.value.size() : 0);
  }
}

void Adadelta::step(NetworkParams& params, const Gradients& grads) {
  if (grads.size() != params.size() || slots_.size() != params.size()) {
    throw ShapeError("adadelta: gradient list does not match parameters");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].trainable) continue;
    if (grads[b].shape() != params[b].value.shape()) {
      throw ShapeError("adadelta: gradient shape mismatch for " + params[b].name);
    }
    if (!grads[b].all_finite()) {
      throw TrainingError("non-finite gradient in " + params[b].name);
    }
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].trainable) continue;
    std::span<double> x = params[b].value.values();
    std::span<const double> g = grads[b].values();
    for (std::size_t i = 0; i < x.size(); ++i) adadelta_step(x[i], g[i], slots_[b][i], config_);
  }
  params.touch();
}

namespace {

// Validation runs share a fixed chunking so the result never depends on the
// caller's batch size beyond summation order.
double sum_squared_error(const Hyper3DNetReg& net, std::span<const Sample> samples,
                         std::size_t batch_size) {
  double total = 0.0;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const Tensor pred = net.forward(batch_inputs(samples, idx), Mode::kEval);
    const Tensor target = batch_targets(samples, idx);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - target[i];
      total += d * d;
    }
  }
  return total;
}

}  // namespace

double evaluate_mse(const Hyper3DNetReg& net, std::span<const Sample> samples,
                    std::size_t batch_size) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t per_sample = samples.front().out_size * samples.front().out_size;
  return sum_squared_error(net, samples, std::max<std::size_t>(batch_size, 1)) /
         static_cast<double>(samples.size() * per_sample);
}

TrainResult train(const DatasetSplit& split, const TrainConfig& config,
                  const ModelConfig& model_config, const EpochCallback& on_epoch) {
  if (split.train.empty()) throw TrainingError("train: empty training split");
  if (config.batch_size == 0) throw TrainingError("train: batch_size must be at least 1");
  model_config.validate();
  for (const Sample& s : split.train) {
    if (s.window != model_config.window || s.out_size != model_config.out_size ||
        s.channels != model_config.channels) {
      throw TrainingError("train: sample geometry does not match the model configuration");
    }
  }

  const Normalizer norm = fit_normalizer(std::span<const Sample>(split.train));
  std::vector<Sample> train_set = split.train;
  std::vector<Sample> val_set = split.validation;
  normalize_samples(train_set, norm);
  normalize_samples(val_set, norm);

  Hyper3DNetReg net(model_config, mix_seed(config.seed, 1));
  Adadelta optimizer(net.params(), {config.rho, config.epsilon});
  Rng shuffle_rng(mix_seed(config.seed, 2));
  const std::uint64_t dropout_base = mix_seed(config.seed, 3);

  TrainResult result;
  result.best = Checkpoint{model_config, net.params(), norm};
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardCache cache;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = batch_inputs(train_set, idx);
      const Tensor y = batch_targets(train_set, idx);
      const std::uint64_t dropout_seed = mix_seed(dropout_base, (epoch << 32) | batch_index);
      const Tensor pred = net.forward(x, Mode::kTrain, &cache, dropout_seed);
      const LossResult loss = mse_loss(pred, y);
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      const Gradients grads = net.backward(cache, loss.grad);
      net.commit_batch_statistics(cache);
      optimizer.step(net.params(), grads);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_mse = evaluate_mse(net, train_set, config.batch_size);
    record.val_mse = evaluate_mse(net, val_set, config.batch_size);
    if (!std::isfinite(record.train_mse)) {
      throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
    }
    result.history.push_back(record);

    const double score = val_set.empty() ? record.train_mse : record.val_mse;
    if (score < best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.best.params = net.params();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch && !on_epoch(record)) break;
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  return result;
}

void write_loss_history(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "epoch,train_mse,val_mse\n" << std::setprecision(17);
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.train_mse << ',';
    if (std::isfinite(r.val_mse)) out << r.val_mse;
    out << '\n';
  }
}

}  // namespace hyper3d
