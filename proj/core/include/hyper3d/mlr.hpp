#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "hyper3d/mapgen.hpp"
#include "hyper3d/sampling.hpp"

namespace hyper3d {

struct MlrModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  bool ridge_fallback = false;  // design was rank deficient

  bool operator==(const MlrModel&) const = default;
};

/// Row-major (rows x features) design without the intercept column.
struct MlrData {
  std::size_t features = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t rows() const { return y.size(); }
};

inline constexpr double kRidgeLambda = 1e-8;

/// Least squares with an intercept. A rank-deficient design falls back to a
/// ridge solve (lambda 1e-8, intercept unpenalized) and warns on stderr.
MlrModel fit_mlr(const MlrData& data);

/// Affine prediction before the non-negativity clamp.
double predict_mlr_linear(const MlrModel& model, std::span<const double> features);
/// max(0, predict_mlr_linear(...)).
double predict_mlr(const MlrModel& model, std::span<const double> features);

/// Center-cell features and center-cell yield of each sample.
MlrData center_cells(std::span<const Sample> samples);

/// Window predictor that reads the center cell only (N = 1 semantics).
Predictor mlr_predictor(const MlrModel& model, std::size_t window);

/// `channel,value` rows for each coefficient, then `intercept,value`.
void write_mlr_csv(const MlrModel& model, const std::filesystem::path& path);
MlrModel read_mlr_csv(const std::filesystem::path& path);

}  // namespace hyper3d
