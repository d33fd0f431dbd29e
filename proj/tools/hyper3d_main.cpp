// hyper3d: synth -> train -> predict -> evaluate -> render

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hyper3d/parallel.hpp"
#include "hyper3d/pipeline.hpp"

namespace {

using namespace hyper3d;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> model_n;
  std::optional<int> threads;
  std::optional<std::string> field;
  std::optional<std::size_t> epochs;
  bool quiet = false;
};

ConfigFile load_config(const std::string& path) {
  if (path.empty()) return ConfigFile::parse("", "<defaults>");
  ConfigFile cfg = ConfigFile::load(path);
  check_config_keys(cfg);
  return cfg;
}

RunConfig resolve_run(const Common& c) {
  const ConfigFile cfg = load_config(c.config);
  RunConfig run = run_config_from_config(cfg);
  if (c.seed) run.seed = *c.seed;
  if (c.out) run.out_dir = *c.out;
  if (c.model_n) run.model_n = *c.model_n;
  if (c.threads) run.threads = *c.threads;
  if (c.field) run.field_dir = *c.field;
  if (c.epochs) run.train.epochs = *c.epochs;
  run.validate();
  set_thread_count(run.threads);
  return run;
}

void add_run_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--model-n", c.model_n, "output window size N")
      ->check(CLI::IsMember({1, 3, 5}));
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--field", c.field, "field directory (overrides run.field_dir)");
}

// "label=path" or a bare path labelled by its stem.
LabeledRaster parse_prediction(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {std::filesystem::path(arg).stem().string(), arg};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyper3DNetReg yield-map toolkit"};
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-year field");
  synth->add_option("--config", common.config, "field specification file")
      ->check(CLI::ExistingFile);
  synth->add_option("--seed", common.seed, "random seed (overrides field.seed)");
  synth->add_option("--out", common.out, "output field directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model on the training years");
  add_run_flags(train_cmd, common);
  bool baseline = false;
  train_cmd->add_flag("--baseline", baseline, "also fit the MLR baseline");
  train_cmd->add_option("--epochs", common.epochs, "epoch count (overrides train.epochs)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--quiet", common.quiet, "no per-epoch progress");

  auto* predict = app.add_subcommand("predict", "predict the yield map of a year");
  add_run_flags(predict, common);
  std::string checkpoint;
  std::optional<int> year;
  std::optional<std::string> mlr;
  predict->add_option("--checkpoint", checkpoint, "trained model")->required()->check(
      CLI::ExistingFile);
  predict->add_option("--year", year, "year to predict (default: the test year)");
  predict->add_option("--mlr", mlr, "MLR coefficient file to predict alongside")
      ->check(CLI::ExistingFile);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score predicted maps against the truth");
  std::string truth;
  std::vector<std::string> preds;
  evaluate_cmd->add_option("--truth", truth, "observed yield raster")->required()->check(
      CLI::ExistingFile);
  evaluate_cmd->add_option("--pred", preds, "predicted raster, optionally label=path")
      ->required();
  evaluate_cmd->add_option("--out", common.out, "report directory")->required();

  auto* render = app.add_subcommand("render", "write a raster as a PGM/PPM image");
  std::string input, palette = "heat";
  render->add_option("--input", input, "single-channel FRST raster")->required()->check(
      CLI::ExistingFile);
  render->add_option("--palette", palette, "gray or heat")
      ->check(CLI::IsMember({"gray", "grey", "heat"}));
  render->add_option("--out", common.out, "image path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      SynthSpec spec = synth_spec_from_config(load_config(common.config));
      if (common.seed) spec.seed = *common.seed;
      cmd_synth(spec, *common.out);
    } else if (train_cmd->parsed()) {
      const RunConfig run = resolve_run(common);
      const TrainOutputs out = cmd_train(run, baseline, common.quiet ? nullptr : &std::cerr);
      std::cout << out.checkpoint.string() << '\n' << out.loss_history.string() << '\n';
      if (out.mlr) std::cout << out.mlr->string() << '\n';
    } else if (predict->parsed()) {
      const RunConfig run = resolve_run(common);
      std::optional<std::filesystem::path> mlr_path;
      if (mlr) mlr_path = *mlr;
      const PredictOutputs out = cmd_predict(run, checkpoint, year, mlr_path);
      std::cout << out.prediction.string() << '\n' << out.counts.string() << '\n';
      if (out.mlr_prediction) std::cout << out.mlr_prediction->string() << '\n';
    } else if (evaluate_cmd->parsed()) {
      std::vector<LabeledRaster> labeled;
      for (const auto& p : preds) labeled.push_back(parse_prediction(p));
      cmd_evaluate(truth, labeled, *common.out);
      std::cout << (std::filesystem::path(*common.out) / "metrics.csv").string() << '\n';
    } else if (render->parsed()) {
      cmd_render(input, parse_palette(palette), *common.out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
