#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hyper3d {

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated FRST stream.
class FormatError : public RasterError {
 public:
  using RasterError::RasterError;
};

/// Fixed order of the eight feature channels.
enum Channel : std::size_t {
  kVV = 0,
  kVH,
  kNitrogen,
  kPrecipitation,
  kSlope,
  kElevation,
  kTpi,
  kAspect,
};
inline constexpr std::size_t kFeatureChannels = 8;
inline constexpr std::array<std::string_view, kFeatureChannels> kChannelNames{
    "VV", "VH", "nitrogen", "precipitation", "slope", "elevation", "TPI", "aspect"};

inline constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();

/// Multi-channel grid of cell values plus the in-field mask F.
///
/// Values are stored row-major as (row, col, channel). Cells outside the
/// field hold NaN; anything that feeds the network reads them as 0 through
/// input_value().
class FieldRaster {
 public:
  FieldRaster() = default;
  FieldRaster(std::size_t height, std::size_t width, std::size_t channels, double cell_size = 10.0);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  double cell_size() const { return cell_size_; }
  std::size_t cell_count() const { return height_ * width_; }
  bool empty() const { return cell_count() == 0; }

  double& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  bool in_field(std::size_t row, std::size_t col) const { return mask_[row * width_ + col] != 0; }
  void set_in_field(std::size_t row, std::size_t col, bool inside) {
    mask_[row * width_ + col] = inside ? 1 : 0;
  }

  /// Value as seen by network input assembly: 0 outside the raster or the field.
  double input_value(std::ptrdiff_t row, std::ptrdiff_t col, std::size_t ch) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<std::uint8_t> mask() { return mask_; }
  std::span<const std::uint8_t> mask() const { return mask_; }

  std::size_t field_cell_count() const;
  bool same_geometry(const FieldRaster& other) const;

  /// Copies one channel into a single-channel raster with the same mask.
  FieldRaster channel(std::size_t ch) const;

  /// Masks out every cell with a non-finite value in any channel, then sets
  /// all masked-out values to NaN.
  void finalize();

  bool operator==(const FieldRaster& other) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  double cell_size_ = 10.0;
  std::vector<double> data_;
  std::vector<std::uint8_t> mask_;
};

/// A georeferenced yield observation (meters east/north, bu/ac).
struct GeoPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

/// Grid placement for point aggregation. (origin_x, origin_y) is the
/// north-west corner; row 0 is the northernmost row.
struct GridGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  double cell_size = 10.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
};

/// Averages points falling in each cell. Cells without points are masked out.
FieldRaster aggregate_points(std::span<const GeoPoint> points, const GridGeometry& grid);

struct ChannelRange {
  double min = 0.0;
  double max = 0.0;
  bool constant() const { return max == min; }
  bool operator==(const ChannelRange&) const = default;
};

/// Per-channel min-max scaling fitted on training cells.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::vector<ChannelRange> ranges);

  std::size_t channels() const { return ranges_.size(); }
  const std::vector<ChannelRange>& ranges() const { return ranges_; }
  bool is_constant(std::size_t ch) const { return ranges_[ch].constant(); }

  /// (v - min) / (max - min); constant channels give 0. No clipping.
  double scale(std::size_t ch, double v) const;
  double invert(std::size_t ch, double scaled) const;

  bool operator==(const Normalizer&) const = default;

 private:
  std::vector<ChannelRange> ranges_;
};

/// Min/max per channel over the in-field cells of every raster.
Normalizer fit_normalizer(std::span<const FieldRaster> rasters);

/// Scales in-field values; out-of-field cells become 0. Mask is preserved.
FieldRaster apply_normalizer(const FieldRaster& raster, const Normalizer& norm);

// FRST binary format: "FRST", version 0x01, u32 height, u32 width,
// u32 channels, f64 cell_size, f32 values (row, col, channel), u8 mask.
inline constexpr std::size_t kFrstHeaderBytes = 4 + 1 + 4 + 4 + 4 + 8;
std::size_t frst_file_size(std::size_t height, std::size_t width, std::size_t channels);

void write_raster(const FieldRaster& raster, std::ostream& out);
void write_raster(const FieldRaster& raster, const std::filesystem::path& path);
FieldRaster read_raster(std::istream& in);
FieldRaster read_raster(const std::filesystem::path& path);

/// Imports `row,col,channel,value` lines. A cell is in the field iff every
/// channel was given a finite value. A non-numeric first line is a header.
FieldRaster read_raster_csv(const std::filesystem::path& path, std::size_t height,
                            std::size_t width, std::size_t channels, double cell_size = 10.0);

}  // namespace hyper3d
