#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hyper3d/checkpoint.hpp"
#include "hyper3d/network.hpp"
#include "hyper3d/sampling.hpp"

namespace hyper3d {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pred
};

/// Mean of (pred - target)^2 over every entry; gradient 2 (pred - target) / count.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// One element's running averages E[g^2] and E[dx^2].
struct AdadeltaSlot {
  double mean_sq_grad = 0.0;
  double mean_sq_delta = 0.0;
};

/// Applies one update to a scalar and returns the step taken.
double adadelta_step(double& x, double g, AdadeltaSlot& slot, const AdadeltaConfig& config);

/// Accumulators mirroring every trainable block of a parameter set.
class Adadelta {
 public:
  Adadelta(const NetworkParams& params, AdadeltaConfig config = {});

  const AdadeltaConfig& config() const { return config_; }
  /// Empty for non-trainable blocks.
  const std::vector<std::vector<AdadeltaSlot>>& state() const { return slots_; }

  /// Throws TrainingError naming the block if any gradient is non-finite;
  /// nothing is modified in that case.
  void step(NetworkParams& params, const Gradients& grads);

 private:
  AdadeltaConfig config_;
  std::vector<std::vector<AdadeltaSlot>> slots_;
};

struct TrainConfig {
  std::size_t batch_size = 96;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  double rho = 0.95;
  double epsilon = 1e-6;
  std::size_t patience = 0;  // epochs without validation improvement; 0 disables
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // eval-mode MSE over the train split after the epoch
  double val_mse = 0.0;    // NaN when the validation split is empty
};

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

/// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Eval-mode MSE of a network over normalized samples.
double evaluate_mse(const Hyper3DNetReg& net, std::span<const Sample> samples,
                    std::size_t batch_size = 96);

/// Fits the input normalizer on the train split, then runs mini-batch
/// Adadelta on the MSE loss. The returned checkpoint is the epoch with the
/// lowest validation MSE (train MSE when there is no validation data).
TrainResult train(const DatasetSplit& split, const TrainConfig& config,
                  const ModelConfig& model_config, const EpochCallback& on_epoch = {});

/// `epoch,train_mse,val_mse` with full round-trip precision.
void write_loss_history(std::span<const EpochRecord> history, const std::filesystem::path& path);

}  // namespace hyper3d
