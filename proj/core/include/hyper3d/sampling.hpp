#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hyper3d/raster.hpp"
#include "hyper3d/tensor.hpp"

namespace hyper3d {

struct PatchOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PatchOrigin&) const = default;
};

/// One training pair: a W x W x n feature window and the N x N yield patch
/// centered inside it.
struct Sample {
  std::size_t window = 5;
  std::size_t out_size = 5;
  std::size_t channels = 0;
  std::vector<double> x;              // (row, col, channel); 0 outside the field
  std::vector<std::uint8_t> x_valid;  // (row, col); 1 where the cell is in the field
  std::vector<double> y;              // (row, col), bu/ac
  PatchOrigin origin;
  int year = 0;

  double feature(std::size_t r, std::size_t c, std::size_t ch) const {
    return x[(r * window + c) * channels + ch];
  }
  double target(std::size_t r, std::size_t c) const { return y[r * out_size + c]; }
  /// Offset of the target footprint from the window edge: (W - N) / 2.
  std::size_t target_offset() const { return (window - out_size) / 2; }
};

struct PatchSpec {
  std::size_t window = 5;
  std::size_t out_size = 5;
  double max_overlap = 0.75;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::uint64_t seed = 0;
};

struct YearData {
  int year = 0;
  FieldRaster features;
  FieldRaster yield;
};

/// Densest grid stride whose linear overlap (W - s) / W stays within
/// max_overlap: ceil(W * (1 - max_overlap)).
std::size_t patch_stride(std::size_t window, double max_overlap);

/// Patches on the stride grid whose N x N target cells are all in the field
/// with finite yield. Feature cells outside the field read as 0.
std::vector<Sample> extract_patches(const FieldRaster& features, const FieldRaster& yield_map,
                                    const PatchSpec& spec, int year = 0);

/// Disjoint union of per-year patches, each tagged with its year.
std::vector<Sample> assemble_years(std::span<const YearData> years, const PatchSpec& spec);

/// Seeded shuffle, then the first ceil(train_fraction * k) go to training.
DatasetSplit split_train_val(std::vector<Sample> samples, std::uint64_t seed,
                             double train_fraction = 0.9);

/// Min/max over the in-field window cells of the given samples.
Normalizer fit_normalizer(std::span<const Sample> samples);
void normalize_samples(std::span<Sample> samples, const Normalizer& norm);

/// (b, W, W, n, 1) network input for samples[begin, end) in `order`.
Tensor batch_inputs(std::span<const Sample> samples, std::span<const std::size_t> order);
/// (b, N, N), or (b, 1) when N = 1.
Tensor batch_targets(std::span<const Sample> samples, std::span<const std::size_t> order);

/// Debug dump: `samples.frst` holds an x block then a y block (FRST) per
/// sample; `manifest.csv` lists index,year,row,col.
void write_sample_dump(std::span<const Sample> samples, const std::filesystem::path& dir);

}  // namespace hyper3d
