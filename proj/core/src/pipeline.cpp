#include "hyper3d/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "hyper3d/checkpoint.hpp"
#include "hyper3d/mapgen.hpp"
#include "hyper3d/metrics.hpp"
#include "hyper3d/mlr.hpp"

namespace hyper3d {

void RunConfig::validate() const {
  if (model_n != 1 && model_n != 3 && model_n != 5) {
    throw ConfigError("model_n must be 1, 3 or 5 (got " + std::to_string(model_n) + ")");
  }
  if (test_year && std::find(train_years.begin(), train_years.end(), *test_year) != train_years.end()) {
    throw ConfigError("test year " + std::to_string(*test_year) + " is also a training year");
  }
  if (train.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (train.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

SynthSpec synth_spec_from_config(const ConfigFile& cfg) {
  SynthSpec spec;
  spec.height = static_cast<std::size_t>(cfg.get_uint("field.height", spec.height));
  spec.width = static_cast<std::size_t>(cfg.get_uint("field.width", spec.width));
  spec.years = cfg.get_int_list("field.years", spec.years);
  spec.seed = cfg.get_uint("field.seed", spec.seed);
  spec.noise_sigma = cfg.get_double("field.noise_sigma", spec.noise_sigma);
  spec.terrain_relief = cfg.get_double("field.terrain_relief", spec.terrain_relief);
  spec.cell_size = cfg.get_double("field.cell_size", spec.cell_size);
  if (auto b = cfg.get("field.boundary")) spec.boundary = parse_boundary(*b);
  if (auto r = cfg.get("field.response")) spec.response = parse_response(*r);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

RunConfig run_config_from_config(const ConfigFile& cfg) {
  RunConfig run;
  run.field_dir = cfg.get_string("run.field_dir", run.field_dir.string());
  run.train_years = cfg.get_int_list("run.train_years", {});
  if (cfg.has("run.test_year")) run.test_year = static_cast<int>(cfg.get_int("run.test_year", 0));
  run.model_n = static_cast<std::size_t>(cfg.get_uint("run.model_n", run.model_n));
  run.seed = cfg.get_uint("run.seed", run.seed);
  run.out_dir = cfg.get_string("run.out_dir", run.out_dir.string());
  run.threads = static_cast<int>(cfg.get_int("run.threads", run.threads));
  run.train.batch_size = static_cast<std::size_t>(cfg.get_uint("train.batch_size", run.train.batch_size));
  run.train.epochs = static_cast<std::size_t>(cfg.get_uint("train.epochs", run.train.epochs));
  run.train.rho = cfg.get_double("train.rho", run.train.rho);
  run.train.epsilon = cfg.get_double("train.epsilon", run.train.epsilon);
  run.train.patience = static_cast<std::size_t>(cfg.get_uint("train.patience", run.train.patience));
  run.validate();
  return run;
}

void check_config_keys(const ConfigFile& cfg) {
  static const std::vector<std::string> known{
      "field.height",     "field.width",    "field.years",       "field.seed",
      "field.boundary",   "field.noise_sigma", "field.response", "field.terrain_relief",
      "field.cell_size",  "run.field_dir",  "run.train_years",   "run.test_year",
      "run.model_n",      "run.seed",       "run.out_dir",       "run.threads",
      "train.batch_size", "train.epochs",   "train.rho",         "train.epsilon",
      "train.patience"};
  const auto unknown = cfg.unknown_keys(known);
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
}

YearPlan plan_years(const RunConfig& run) {
  const auto entries = read_manifest(run.field_dir);
  auto find = [&](int year) -> const ManifestEntry& {
    for (const auto& e : entries) {
      if (e.year == year) return e;
    }
    throw std::runtime_error("year " + std::to_string(year) + " is not in " +
                             (run.field_dir / "manifest.csv").string());
  };
  YearPlan plan;
  if (run.test_year) {
    plan.test = find(*run.test_year);
  } else {
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [](const ManifestEntry& e) { return e.role == "test"; });
    if (it == entries.end()) throw std::runtime_error("manifest names no test year");
    plan.test = *it;
  }
  if (!run.train_years.empty()) {
    for (int y : run.train_years) plan.train.push_back(find(y));
  } else {
    for (const auto& e : entries) {
      if (e.role == "train" && e.year != plan.test.year) plan.train.push_back(e);
    }
  }
  if (plan.train.empty()) throw std::runtime_error("no training years");
  for (const auto& e : plan.train) {
    if (e.year == plan.test.year) {
      throw ConfigError("test year " + std::to_string(e.year) + " is also a training year");
    }
  }
  return plan;
}

void cmd_synth(const SynthSpec& spec, const fs::path& out_dir) {
  write_field(generate(spec), out_dir);
}

TrainOutputs cmd_train(const RunConfig& run, bool baseline, std::ostream* log) {
  run.validate();
  const YearPlan plan = plan_years(run);
  std::vector<YearData> years;
  for (const auto& e : plan.train) years.push_back(load_year(run.field_dir, e));

  const PatchSpec patch{5, run.model_n, 0.75};
  DatasetSplit split = split_train_val(assemble_years(years, patch), run.seed);
  if (log) {
    *log << "train: " << split.train.size() << " training / " << split.validation.size()
         << " validation patches, N=" << run.model_n << '\n';
  }

  ModelConfig model;
  model.window = patch.window;
  model.channels = years.front().features.channels();
  model.out_size = run.model_n;
  TrainConfig tc = run.train;
  tc.seed = run.seed;

  TrainOutputs out;
  out.result = train(split, tc, model, [&](const EpochRecord& r) {
    if (log) {
      *log << "epoch " << r.epoch << " train_mse " << std::setprecision(6) << r.train_mse
           << " val_mse " << r.val_mse << '\n';
    }
    return true;
  });

  fs::create_directories(run.out_dir);
  const std::string tag = "n" + std::to_string(run.model_n);
  out.checkpoint = run.out_dir / ("model_" + tag + ".ckpt");
  out.loss_history = run.out_dir / ("loss_" + tag + ".csv");
  write_checkpoint(out.result.best, out.checkpoint);
  write_loss_history(out.result.history, out.loss_history);

  if (baseline) {
    std::vector<Sample> cells = split.train;
    normalize_samples(cells, *out.result.best.normalizer);
    const MlrModel mlr = fit_mlr(center_cells(cells));
    out.mlr = run.out_dir / "mlr_coefficients.csv";
    write_mlr_csv(mlr, *out.mlr);
  }
  return out;
}

PredictOutputs cmd_predict(const RunConfig& run, const fs::path& checkpoint_path,
                           std::optional<int> year, const std::optional<fs::path>& mlr) {
  const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
  if (!checkpoint.normalizer) throw FormatError(checkpoint_path.string() + ": no normalizer stored");
  RunConfig target = run;
  if (year) target.test_year = year;
  const YearPlan plan = plan_years(target);
  const YearData data = load_year(run.field_dir, plan.test);
  if (data.features.channels() != checkpoint.normalizer->channels()) {
    throw RasterError("test rasters have " + std::to_string(data.features.channels()) +
                      " channels, checkpoint expects " +
                      std::to_string(checkpoint.normalizer->channels()));
  }
  const FieldRaster features = apply_normalizer(data.features, *checkpoint.normalizer);
  const Hyper3DNetReg net = to_network(checkpoint);
  const PredictedMap map = predict_map(network_predictor(net), features, data.features);

  fs::create_directories(run.out_dir);
  const std::string tag = "n" + std::to_string(checkpoint.config.out_size);
  PredictOutputs out{run.out_dir / ("pred_" + tag + ".frst"),
                     run.out_dir / ("count_" + tag + ".frst"), std::nullopt};
  write_raster(map.yield, out.prediction);
  write_raster(map.counts, out.counts);
  if (mlr) {
    const MlrModel model = read_mlr_csv(*mlr);
    const PredictedMap mlr_map =
        predict_map(mlr_predictor(model, checkpoint.config.window), features, data.features);
    out.mlr_prediction = run.out_dir / "pred_mlr.frst";
    write_raster(mlr_map.yield, *out.mlr_prediction);
  }
  return out;
}

std::vector<MetricsReport> cmd_evaluate(const fs::path& truth_path,
                                        const std::vector<LabeledRaster>& predictions,
                                        const fs::path& out_dir) {
  if (predictions.empty()) throw std::invalid_argument("evaluate: no predictions given");
  const FieldRaster truth = read_raster(truth_path);
  std::vector<MetricsReport> reports;
  std::vector<std::string> labels;
  fs::create_directories(out_dir);
  for (const auto& p : predictions) {
    const FieldRaster pred = read_raster(p.path);
    if (!truth.same_geometry(pred)) {
      throw RasterError("evaluate: " + p.path.string() + " does not match the truth grid");
    }
    MetricsReport report = evaluate(truth, pred);
    write_raster(report.ssim_map_3, out_dir / ("ssim3_" + p.label + ".frst"));
    write_raster(report.ssim_map_11, out_dir / ("ssim11_" + p.label + ".frst"));
    write_raster(report.square_error, out_dir / ("sqerr_" + p.label + ".frst"));
    reports.push_back(std::move(report));
    labels.push_back(p.label);
  }
  write_metrics_csv(reports, labels, out_dir / "metrics.csv");
  return reports;
}

void cmd_render(const fs::path& input, Palette palette, const fs::path& output) {
  write_image(read_raster(input), palette, output);
}

}  // namespace hyper3d
