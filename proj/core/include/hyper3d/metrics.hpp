#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hyper3d/raster.hpp"

namespace hyper3d {

// All metrics aggregate over F, the in-field cells of the truth raster.
double rmse(const FieldRaster& truth, const FieldRaster& predicted);
/// Square root of the median squared error; even counts average the two
/// central values.
double rmedse(const FieldRaster& truth, const FieldRaster& predicted);

/// Largest value over both maps with background read as 0; falls back to 1
/// when nothing is positive.
double dynamic_range(const FieldRaster& truth, const FieldRaster& predicted);

/// SSIM with uniform w x w windows centered on every raster cell. Cells
/// outside the raster or the field read as 0. The returned raster carries a
/// value at every cell; its mask is the truth mask.
FieldRaster ssim_map(const FieldRaster& truth, const FieldRaster& predicted, std::size_t w,
                     double L);
FieldRaster ssim_map(const FieldRaster& truth, const FieldRaster& predicted, std::size_t w);

/// Mean of the map over the in-field cells of `field`.
double ssim_aggregate(const FieldRaster& map, const FieldRaster& field);

struct MetricsReport {
  double rmse = 0.0;
  double rmedse = 0.0;
  double ssim3 = 0.0;
  double ssim11 = 0.0;
  double dynamic_range = 1.0;
  std::size_t field_cells = 0;
  FieldRaster ssim_map_3;
  FieldRaster ssim_map_11;
  FieldRaster square_error;
};

MetricsReport evaluate(const FieldRaster& truth, const FieldRaster& predicted);

/// Rows RMSE, RMedSE, SSIM3*, SSIM11* (SSIM x 100), then the raw SSIM
/// values, |F| and L. One value column per report, headed by its label;
/// a single report uses the header `metric,value`.
void write_metrics_csv(std::span<const MetricsReport> reports, std::span<const std::string> labels,
                       const std::filesystem::path& path);

}  // namespace hyper3d
