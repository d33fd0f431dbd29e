#include "hyper3d/mapgen.hpp"

#include <algorithm>
#include <cmath>

namespace hyper3d {

Predictor network_predictor(const Hyper3DNetReg& net) {
  const ModelConfig& c = net.config();
  return {c.window, c.out_size, c.channels,
          [&net](const Tensor& x) { return net.forward(x, Mode::kEval); }};
}

PredictionAccumulator::PredictionAccumulator(std::size_t height, std::size_t width)
    : height_(height), width_(width), sum_(height * width, 0.0), count_(height * width, 0) {}

PredictedMap predict_map(const Predictor& predictor, const FieldRaster& features,
                         const FieldRaster& field, std::size_t chunk_size) {
  const std::size_t W = predictor.window, N = predictor.out_size, n = predictor.channels;
  if (!predictor.run) throw std::invalid_argument("predict_map: empty predictor");
  if (N > W || N % 2 == 0 || W % 2 == 0) {
    throw std::invalid_argument("predict_map: window and output size must be odd with N <= W");
  }
  if (features.height() != field.height() || features.width() != field.width()) {
    throw RasterError("predict_map: feature and field rasters differ in size");
  }
  if (features.channels() != n) {
    throw RasterError("predict_map: model expects " + std::to_string(n) + " channels, raster has " +
                      std::to_string(features.channels()));
  }
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < field.height(); ++r) {
    for (std::size_t c = 0; c < field.width(); ++c) {
      if (field.in_field(r, c)) cells.emplace_back(r, c);
    }
  }
  if (cells.empty()) throw RasterError("predict_map: no in-field cells");
  chunk_size = std::max<std::size_t>(chunk_size, 1);

  const auto half_w = static_cast<std::ptrdiff_t>(W / 2);
  const auto half_n = static_cast<std::ptrdiff_t>(N / 2);
  const auto height = static_cast<std::ptrdiff_t>(field.height());
  const auto width = static_cast<std::ptrdiff_t>(field.width());
  PredictionAccumulator acc(field.height(), field.width());

  for (std::size_t begin = 0; begin < cells.size(); begin += chunk_size) {
    const std::size_t end = std::min(cells.size(), begin + chunk_size);
    Tensor x({end - begin, W, W, n, 1});
    double* out = x.data();
    for (std::size_t k = begin; k < end; ++k) {
      const auto r0 = static_cast<std::ptrdiff_t>(cells[k].first) - half_w;
      const auto c0 = static_cast<std::ptrdiff_t>(cells[k].second) - half_w;
      for (std::size_t i = 0; i < W; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          for (std::size_t ch = 0; ch < n; ++ch) {
            *out++ = features.input_value(r0 + static_cast<std::ptrdiff_t>(i),
                                          c0 + static_cast<std::ptrdiff_t>(j), ch);
          }
        }
      }
    }
    const Tensor pred = predictor.run(x);
    if (pred.size() != (end - begin) * N * N) {
      throw ShapeError("predict_map: predictor returned " + to_string(pred.shape()));
    }
    for (std::size_t k = begin; k < end; ++k) {
      const double* p = pred.data() + (k - begin) * N * N;
      const auto r0 = static_cast<std::ptrdiff_t>(cells[k].first) - half_n;
      const auto c0 = static_cast<std::ptrdiff_t>(cells[k].second) - half_n;
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          const std::ptrdiff_t r = r0 + static_cast<std::ptrdiff_t>(i);
          const std::ptrdiff_t c = c0 + static_cast<std::ptrdiff_t>(j);
          if (r < 0 || c < 0 || r >= height || c >= width) continue;
          const auto ur = static_cast<std::size_t>(r), uc = static_cast<std::size_t>(c);
          if (field.in_field(ur, uc)) acc.add(ur, uc, p[i * N + j]);
        }
      }
    }
  }

  PredictedMap result{FieldRaster(field.height(), field.width(), 1, field.cell_size()),
                      FieldRaster(field.height(), field.width(), 1, field.cell_size())};
  for (std::size_t r = 0; r < field.height(); ++r) {
    for (std::size_t c = 0; c < field.width(); ++c) {
      if (!field.in_field(r, c)) continue;
      // every in-field cell receives at least its own window's center output
      result.yield.at(r, c) = acc.sum(r, c) / acc.count(r, c);
      result.yield.set_in_field(r, c, true);
      result.counts.at(r, c) = acc.count(r, c);
      result.counts.set_in_field(r, c, true);
    }
  }
  return result;
}

FieldRaster square_error_map(const FieldRaster& truth, const FieldRaster& predicted) {
  if (!truth.same_geometry(predicted) || truth.channels() != 1 || predicted.channels() != 1) {
    throw RasterError("square_error_map: rasters must share a single-channel geometry");
  }
  FieldRaster out(truth.height(), truth.width(), 1, truth.cell_size());
  for (std::size_t r = 0; r < truth.height(); ++r) {
    for (std::size_t c = 0; c < truth.width(); ++c) {
      if (!truth.in_field(r, c)) continue;
      const double d = truth.at(r, c) - predicted.at(r, c);
      out.at(r, c) = d * d;
      out.set_in_field(r, c, true);
    }
  }
  return out;
}

}  // namespace hyper3d
