#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "hyper3d/network.hpp"
#include "hyper3d/raster.hpp"
#include "hyper3d/tensor.hpp"

namespace hyper3d {

/// Anything that maps a (b, W, W, n, 1) window batch to (b, N, N) or (b, 1).
struct Predictor {
  std::size_t window = 5;
  std::size_t out_size = 5;
  std::size_t channels = 8;
  std::function<Tensor(const Tensor&)> run;
};

/// Eval-mode network; the network must outlive the predictor.
Predictor network_predictor(const Hyper3DNetReg& net);

/// Running per-cell sum and contribution count.
class PredictionAccumulator {
 public:
  PredictionAccumulator(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  void add(std::size_t row, std::size_t col, double value) {
    sum_[row * width_ + col] += value;
    ++count_[row * width_ + col];
  }
  double sum(std::size_t row, std::size_t col) const { return sum_[row * width_ + col]; }
  std::uint32_t count(std::size_t row, std::size_t col) const { return count_[row * width_ + col]; }

 private:
  std::size_t height_, width_;
  std::vector<double> sum_;
  std::vector<std::uint32_t> count_;
};

struct PredictedMap {
  FieldRaster yield;   // sum / count on F
  FieldRaster counts;  // contributions per cell, same mask
};

/// Centers a W x W window on every cell of `field` (stride 1, zero fill
/// outside the raster or the field), predicts, and averages the N x N output
/// footprints centered on each cell over the cells of `field` they cover.
/// `features` must already be normalized. Chunk size only affects batching.
PredictedMap predict_map(const Predictor& predictor, const FieldRaster& features,
                         const FieldRaster& field, std::size_t chunk_size = 256);

/// (M - M_hat)^2 on F; masked out elsewhere.
FieldRaster square_error_map(const FieldRaster& truth, const FieldRaster& predicted);

}  // namespace hyper3d
