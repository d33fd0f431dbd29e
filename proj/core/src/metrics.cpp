#include "hyper3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "hyper3d/mapgen.hpp"

namespace hyper3d {
namespace {

void check_pair(const FieldRaster& truth, const FieldRaster& predicted, const char* what) {
  if (!truth.same_geometry(predicted) || truth.channels() != 1 || predicted.channels() != 1) {
    throw RasterError(std::string(what) + ": rasters must share a single-channel geometry");
  }
}

std::vector<double> squared_errors(const FieldRaster& truth, const FieldRaster& predicted,
                                   const char* what) {
  check_pair(truth, predicted, what);
  std::vector<double> out;
  for (std::size_t r = 0; r < truth.height(); ++r) {
    for (std::size_t c = 0; c < truth.width(); ++c) {
      if (!truth.in_field(r, c)) continue;
      const double d = truth.at(r, c) - predicted.at(r, c);
      if (!std::isfinite(d)) {
        throw RasterError(std::string(what) + ": no finite prediction at (" + std::to_string(r) +
                          ", " + std::to_string(c) + ")");
      }
      out.push_back(d * d);
    }
  }
  if (out.empty()) throw RasterError(std::string(what) + ": empty field");
  return out;
}

// Background and out-of-field cells read as 0.
double pixel(const FieldRaster& m, std::ptrdiff_t r, std::ptrdiff_t c) {
  return m.input_value(r, c, 0);
}

}  // namespace

double rmse(const FieldRaster& truth, const FieldRaster& predicted) {
  const auto se = squared_errors(truth, predicted, "rmse");
  double sum = 0.0;
  for (double v : se) sum += v;
  return std::sqrt(sum / static_cast<double>(se.size()));
}

double rmedse(const FieldRaster& truth, const FieldRaster& predicted) {
  auto se = squared_errors(truth, predicted, "rmedse");
  std::sort(se.begin(), se.end());
  const std::size_t k = se.size();
  const double median = k % 2 == 1 ? se[k / 2] : 0.5 * (se[k / 2 - 1] + se[k / 2]);
  return std::sqrt(median);
}

double dynamic_range(const FieldRaster& truth, const FieldRaster& predicted) {
  check_pair(truth, predicted, "dynamic_range");
  double L = 0.0;
  for (std::size_t r = 0; r < truth.height(); ++r) {
    for (std::size_t c = 0; c < truth.width(); ++c) {
      const auto ir = static_cast<std::ptrdiff_t>(r), ic = static_cast<std::ptrdiff_t>(c);
      L = std::max({L, pixel(truth, ir, ic), pixel(predicted, ir, ic)});
    }
  }
  return L > 0.0 ? L : 1.0;
}

FieldRaster ssim_map(const FieldRaster& truth, const FieldRaster& predicted, std::size_t w,
                     double L) {
  check_pair(truth, predicted, "ssim_map");
  if (w == 0 || w % 2 == 0) throw std::invalid_argument("ssim_map: window size must be odd");
  if (!(L > 0.0)) throw std::invalid_argument("ssim_map: dynamic range must be positive");
  const double C1 = (0.01 * L) * (0.01 * L);
  const double C2 = (0.03 * L) * (0.03 * L);
  const auto half = static_cast<std::ptrdiff_t>(w / 2);
  const double count = static_cast<double>(w * w);

  FieldRaster out(truth.height(), truth.width(), 1, truth.cell_size());
  std::vector<double> a(w * w), b(w * w);
  for (std::size_t r = 0; r < truth.height(); ++r) {
    for (std::size_t c = 0; c < truth.width(); ++c) {
      std::size_t k = 0;
      for (std::ptrdiff_t i = -half; i <= half; ++i) {
        for (std::ptrdiff_t j = -half; j <= half; ++j, ++k) {
          const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + i;
          const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) + j;
          a[k] = pixel(truth, rr, cc);
          b[k] = pixel(predicted, rr, cc);
        }
      }
      double mu_a = 0.0, mu_b = 0.0;
      for (std::size_t t = 0; t < a.size(); ++t) {
        mu_a += a[t];
        mu_b += b[t];
      }
      mu_a /= count;
      mu_b /= count;
      double var_a = 0.0, var_b = 0.0, cov = 0.0;
      for (std::size_t t = 0; t < a.size(); ++t) {
        const double da = a[t] - mu_a, db = b[t] - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
      }
      var_a /= count;
      var_b /= count;
      cov /= count;
      out.at(r, c) = ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)) /
                     ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
      out.set_in_field(r, c, truth.in_field(r, c));
    }
  }
  return out;
}

FieldRaster ssim_map(const FieldRaster& truth, const FieldRaster& predicted, std::size_t w) {
  return ssim_map(truth, predicted, w, dynamic_range(truth, predicted));
}

double ssim_aggregate(const FieldRaster& map, const FieldRaster& field) {
  if (!map.same_geometry(field)) throw RasterError("ssim_aggregate: geometry mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < field.height(); ++r) {
    for (std::size_t c = 0; c < field.width(); ++c) {
      if (!field.in_field(r, c)) continue;
      sum += map.at(r, c);
      ++count;
    }
  }
  if (count == 0) throw RasterError("ssim_aggregate: empty field");
  return sum / static_cast<double>(count);
}

MetricsReport evaluate(const FieldRaster& truth, const FieldRaster& predicted) {
  MetricsReport report;
  report.rmse = rmse(truth, predicted);
  report.rmedse = rmedse(truth, predicted);
  report.dynamic_range = dynamic_range(truth, predicted);
  report.ssim_map_3 = ssim_map(truth, predicted, 3, report.dynamic_range);
  report.ssim_map_11 = ssim_map(truth, predicted, 11, report.dynamic_range);
  report.ssim3 = ssim_aggregate(report.ssim_map_3, truth);
  report.ssim11 = ssim_aggregate(report.ssim_map_11, truth);
  report.field_cells = truth.field_cell_count();
  report.square_error = square_error_map(truth, predicted);
  return report;
}

void write_metrics_csv(std::span<const MetricsReport> reports, std::span<const std::string> labels,
                       const std::filesystem::path& path) {
  if (reports.empty() || reports.size() != labels.size()) {
    throw std::invalid_argument("write_metrics_csv: need one label per report");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "metric";
  if (reports.size() == 1) {
    out << ",value";
  } else {
    for (const auto& label : labels) out << ',' << label;
  }
  out << '\n' << std::setprecision(10);
  auto row = [&](const char* name, auto get) {
    out << name;
    for (const MetricsReport& r : reports) out << ',' << get(r);
    out << '\n';
  };
  row("RMSE", [](const MetricsReport& r) { return r.rmse; });
  row("RMedSE", [](const MetricsReport& r) { return r.rmedse; });
  row("SSIM3*", [](const MetricsReport& r) { return 100.0 * r.ssim3; });
  row("SSIM11*", [](const MetricsReport& r) { return 100.0 * r.ssim11; });
  row("SSIM3", [](const MetricsReport& r) { return r.ssim3; });
  row("SSIM11", [](const MetricsReport& r) { return r.ssim11; });
  row("field_cells", [](const MetricsReport& r) { return r.field_cells; });
  row("dynamic_range", [](const MetricsReport& r) { return r.dynamic_range; });
}

}  // namespace hyper3d
