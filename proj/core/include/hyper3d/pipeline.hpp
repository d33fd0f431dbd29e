#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hyper3d/config.hpp"
#include "hyper3d/metrics.hpp"
#include "hyper3d/render.hpp"
#include "hyper3d/synthfield.hpp"
#include "hyper3d/training.hpp"

namespace hyper3d {

namespace fs = std::filesystem;

/// One field, its train/test years and the model to fit.
struct RunConfig {
  fs::path field_dir = "field";
  std::vector<int> train_years;  // empty: every "train" year in the manifest
  std::optional<int> test_year;  // unset: the manifest's "test" year
  std::size_t model_n = 5;
  std::uint64_t seed = 0;
  TrainConfig train;
  fs::path out_dir = "out";
  int threads = 1;

  void validate() const;
};

// Recognized keys:
//   [field] height width years seed boundary noise_sigma response terrain_relief cell_size
//   [run]   field_dir train_years test_year model_n seed out_dir threads
//   [train] batch_size epochs rho epsilon patience
SynthSpec synth_spec_from_config(const ConfigFile& cfg);
RunConfig run_config_from_config(const ConfigFile& cfg);

/// Throws ConfigError listing keys outside the sections above.
void check_config_keys(const ConfigFile& cfg);

/// Resolves the manifest roles against the configured years.
struct YearPlan {
  std::vector<ManifestEntry> train;
  ManifestEntry test;
};
YearPlan plan_years(const RunConfig& run);

void cmd_synth(const SynthSpec& spec, const fs::path& out_dir);

struct TrainOutputs {
  fs::path checkpoint;
  fs::path loss_history;
  std::optional<fs::path> mlr;
  TrainResult result;
};
/// Writes model_n<N>.ckpt and loss_n<N>.csv; with `baseline`, also an MLR
/// fit on the same normalized train split (mlr_coefficients.csv).
TrainOutputs cmd_train(const RunConfig& run, bool baseline, std::ostream* log);

struct PredictOutputs {
  fs::path prediction;
  fs::path counts;
  std::optional<fs::path> mlr_prediction;
};
/// Predicts the test year (or `year`) with the checkpoint's normalizer:
/// pred_n<N>.frst and count_n<N>.frst, plus pred_mlr.frst when an MLR
/// coefficient file is given.
PredictOutputs cmd_predict(const RunConfig& run, const fs::path& checkpoint,
                           std::optional<int> year, const std::optional<fs::path>& mlr);

struct LabeledRaster {
  std::string label;
  fs::path path;
};
/// metrics.csv plus ssim3_<label>.frst, ssim11_<label>.frst and
/// sqerr_<label>.frst for each prediction.
std::vector<MetricsReport> cmd_evaluate(const fs::path& truth,
                                        const std::vector<LabeledRaster>& predictions,
                                        const fs::path& out_dir);

void cmd_render(const fs::path& input, Palette palette, const fs::path& output);

}  // namespace hyper3d
