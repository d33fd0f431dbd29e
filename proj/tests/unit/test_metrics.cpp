#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "hyper3d/metrics.hpp"
#include "oracles.hpp"

using namespace hyper3d;

namespace {

FieldRaster row_raster(const std::vector<double>& v) {
  FieldRaster r(1, v.size(), 1);
  for (std::size_t c = 0; c < v.size(); ++c) {
    r.set_in_field(0, c, true);
    r.at(0, c) = v[c];
  }
  return r;
}

struct Flat {
  std::vector<double> img;
  std::vector<int> mask;
};

Flat flatten(const FieldRaster& r) {
  Flat f;
  for (std::size_t i = 0; i < r.height(); ++i)
    for (std::size_t j = 0; j < r.width(); ++j) {
      f.mask.push_back(r.in_field(i, j));
      f.img.push_back(r.in_field(i, j) ? r.at(i, j) : 0.0);
    }
  return f;
}

// prediction covering the truth field, plus a few extra cells
FieldRaster prediction_for(const FieldRaster& truth, gen::Gen& g, double noise) {
  FieldRaster p(truth.height(), truth.width(), 1);
  for (std::size_t i = 0; i < truth.height(); ++i)
    for (std::size_t j = 0; j < truth.width(); ++j) {
      if (truth.in_field(i, j)) {
        p.set_in_field(i, j, true);
        p.at(i, j) = std::max(0.0, truth.at(i, j) + g.real(-noise, noise));
      } else if (g.coin(0.1)) {
        p.set_in_field(i, j, true);
        p.at(i, j) = g.real(0, 200);
      }
    }
  return p;
}

}  // namespace

TEST(Metrics, RmseAndRmedseByHand) {
  const FieldRaster t = row_raster({1, 2}), p = row_raster({4, 6});
  EXPECT_DOUBLE_EQ(rmse(t, p), std::sqrt(12.5));
  // squared errors {9, 16, 25}: median 16
  EXPECT_DOUBLE_EQ(rmedse(row_raster({0, 0, 0}), row_raster({3, 4, 5})), 4.0);
  // even count averages the middle pair {9, 16}
  EXPECT_DOUBLE_EQ(rmedse(row_raster({0, 0, 0, 0}), row_raster({1, 3, 4, 5})), std::sqrt(12.5));
}

TEST(Metrics, MatchScalarOraclesOnRandomMaskedMaps) {
  gen::Gen g(12);
  for (int trial = 0; trial < 10; ++trial) {
    const FieldRaster truth = g.raster(20, 20, 1, 0.7, 0, 200);
    const FieldRaster pred = prediction_for(truth, g, 30.0);
    const Flat ft = flatten(truth), fp = flatten(pred);

    std::vector<double> se;
    double L = 0.0;
    for (std::size_t k = 0; k < 400; ++k) {
      L = std::max({L, ft.img[k], fp.img[k]});
      if (ft.mask[k]) se.push_back((ft.img[k] - pred.values()[k]) * (ft.img[k] - pred.values()[k]));
    }
    double sum = 0.0;
    for (double v : se) sum += v;
    EXPECT_NEAR(rmse(truth, pred), std::sqrt(sum / se.size()), 1e-10);
    EXPECT_NEAR(rmedse(truth, pred), std::sqrt(oracle::median(se)), 1e-10);
    EXPECT_EQ(dynamic_range(truth, pred), L);

    for (std::size_t w : {3u, 11u}) {
      const FieldRaster map = ssim_map(truth, pred, w);
      double agg = 0.0;
      for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t c = 0; c < 20; ++c) {
          const double expected = oracle::ssim_window(oracle::window(ft.img, ft.mask, 20, 20, r, c, w),
                                                      oracle::window(fp.img, fp.mask, 20, 20, r, c, w), L);
          EXPECT_NEAR(map.at(r, c), expected, 1e-10);
          EXPECT_EQ(map.in_field(r, c), truth.in_field(r, c));
          if (ft.mask[r * 20 + c]) agg += expected;
        }
      EXPECT_NEAR(ssim_aggregate(map, truth), agg / se.size(), 1e-10);
    }
  }
}

TEST(Metrics, SsimIdentityIsExactlyOne) {
  gen::Gen g(13);
  for (int trial = 0; trial < 10; ++trial) {
    const FieldRaster m = g.raster(20, 20, 1, 0.6, 0, 250);
    for (std::size_t w : {3u, 7u, 11u}) {
      const FieldRaster map = ssim_map(m, m, w);
      for (double v : map.values()) EXPECT_EQ(v, 1.0);
    }
  }
}

TEST(Metrics, SsimIsSymmetric) {
  gen::Gen g(14);
  for (int trial = 0; trial < 10; ++trial) {
    const FieldRaster a = g.raster(15, 15, 1, 0.8, 0, 100);
    FieldRaster b = a;
    for (double& v : b.values())
      if (!std::isnan(v)) v += g.real(-20, 20);
    const FieldRaster ab = ssim_map(a, b, 3), ba = ssim_map(b, a, 3);
    for (std::size_t i = 0; i < ab.values().size(); ++i) EXPECT_EQ(ab.values()[i], ba.values()[i]);
  }
}

TEST(Metrics, SharedBackgroundScoresOne) {
  // a 3x3 field in the corner of a 15x15 raster
  FieldRaster t(15, 15, 1), p(15, 15, 1);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      t.set_in_field(r, c, true);
      p.set_in_field(r, c, true);
      t.at(r, c) = 100.0 + r;
      p.at(r, c) = 80.0 + c;
    }
  const FieldRaster map = ssim_map(t, p, 3);
  for (std::size_t r = 5; r < 15; ++r)
    for (std::size_t c = 5; c < 15; ++c) EXPECT_EQ(map.at(r, c), 1.0);
  EXPECT_LT(map.at(1, 1), 1.0);
  // cells on the field edge see the zero background: the boundary effect
  const FieldRaster map11 = ssim_map(t, p, 11);
  EXPECT_GT(map11.at(1, 1), map.at(1, 1) - 1.0);
}

TEST(Metrics, DynamicRangeFallsBackToOne) {
  EXPECT_EQ(dynamic_range(row_raster({0, 0}), row_raster({0, 0})), 1.0);
  EXPECT_EQ(dynamic_range(row_raster({3, 0}), row_raster({0, 7})), 7.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(ssim_map(row_raster({1}), row_raster({1}), 4), std::invalid_argument);
  EXPECT_THROW(rmse(row_raster({1}), row_raster({1, 2})), RasterError);
  FieldRaster t = row_raster({1, 2}), p(1, 2, 1);
  EXPECT_THROW(rmse(t, p), RasterError);  // prediction missing on the field
}

TEST(Metrics, CsvLayout) {
  gen::Gen g(15);
  const FieldRaster t = g.raster(12, 12, 1, 0.8, 10, 100);
  const FieldRaster p = prediction_for(t, g, 5.0);
  const MetricsReport r = evaluate(t, p);
  EXPECT_EQ(r.field_cells, t.field_cell_count());
  EXPECT_NEAR(r.ssim3, ssim_aggregate(ssim_map(t, p, 3), t), 1e-15);

  const auto path = std::filesystem::temp_directory_path() / "hyper3d_metrics.csv";
  const std::vector<MetricsReport> reports{r, r};
  const std::vector<std::string> labels{"n5", "n1"};
  write_metrics_csv(reports, labels, path);
  std::ifstream in(path);
  std::vector<std::string> firsts;
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,n5,n1");
  while (std::getline(in, line)) firsts.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(firsts, (std::vector<std::string>{"RMSE", "RMedSE", "SSIM3*", "SSIM11*", "SSIM3", "SSIM11",
                                              "field_cells", "dynamic_range"}));
}
