#include "hyper3d/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hyper3d {

FieldRaster::FieldRaster(std::size_t height, std::size_t width, std::size_t channels,
                         double cell_size)
    : height_(height),
      width_(width),
      channels_(channels),
      cell_size_(cell_size),
      data_(height * width * channels, kNoData),
      mask_(height * width, 0) {}

double FieldRaster::input_value(std::ptrdiff_t row, std::ptrdiff_t col, std::size_t ch) const {
  if (row < 0 || col < 0 || row >= static_cast<std::ptrdiff_t>(height_) ||
      col >= static_cast<std::ptrdiff_t>(width_)) {
    return 0.0;
  }
  const auto r = static_cast<std::size_t>(row);
  const auto c = static_cast<std::size_t>(col);
  return in_field(r, c) ? at(r, c, ch) : 0.0;
}

std::size_t FieldRaster::field_cell_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

bool FieldRaster::same_geometry(const FieldRaster& other) const {
  return height_ == other.height_ && width_ == other.width_;
}

FieldRaster FieldRaster::channel(std::size_t ch) const {
  if (ch >= channels_) throw RasterError("channel index out of range");
  FieldRaster out(height_, width_, 1, cell_size_);
  for (std::size_t i = 0; i < cell_count(); ++i) {
    out.data_[i] = data_[i * channels_ + ch];
    out.mask_[i] = mask_[i];
  }
  return out;
}

void FieldRaster::finalize() {
  for (std::size_t i = 0; i < cell_count(); ++i) {
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(i * channels_);
    const bool finite = std::all_of(first, first + static_cast<std::ptrdiff_t>(channels_),
                                    [](double v) { return std::isfinite(v); });
    if (!finite) mask_[i] = 0;
    if (!mask_[i]) std::fill(first, first + static_cast<std::ptrdiff_t>(channels_), kNoData);
  }
}

bool FieldRaster::operator==(const FieldRaster& other) const {
  if (height_ != other.height_ || width_ != other.width_ || channels_ != other.channels_ ||
      std::bit_cast<std::uint64_t>(cell_size_) != std::bit_cast<std::uint64_t>(other.cell_size_) ||
      mask_ != other.mask_) {
    return false;
  }
  return std::equal(data_.begin(), data_.end(), other.data_.begin(), [](double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
  });
}

FieldRaster aggregate_points(std::span<const GeoPoint> points, const GridGeometry& grid) {
  if (points.empty()) throw RasterError("aggregate_points: empty point list");
  if (grid.height == 0 || grid.width == 0 || !(grid.cell_size > 0.0)) {
    throw RasterError("aggregate_points: invalid grid geometry");
  }
  std::vector<double> sums(grid.height * grid.width, 0.0);
  std::vector<std::size_t> counts(grid.height * grid.width, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GeoPoint& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.value)) {
      throw RasterError("aggregate_points: non-finite point at index " + std::to_string(i));
    }
    if (p.value < 0.0) {
      throw RasterError("aggregate_points: negative yield at index " + std::to_string(i));
    }
    const double col = std::floor((p.x - grid.origin_x) / grid.cell_size);
    const double row = std::floor((grid.origin_y - p.y) / grid.cell_size);
    if (row < 0 || col < 0 || row >= static_cast<double>(grid.height) ||
        col >= static_cast<double>(grid.width)) {
      throw RasterError("aggregate_points: point " + std::to_string(i) + " lies outside the grid");
    }
    const auto cell = static_cast<std::size_t>(row) * grid.width + static_cast<std::size_t>(col);
    sums[cell] += p.value;
    ++counts[cell];
  }
  FieldRaster out(grid.height, grid.width, 1, grid.cell_size);
  for (std::size_t r = 0; r < grid.height; ++r) {
    for (std::size_t c = 0; c < grid.width; ++c) {
      const std::size_t cell = r * grid.width + c;
      if (counts[cell] == 0) continue;
      out.at(r, c) = sums[cell] / static_cast<double>(counts[cell]);
      out.set_in_field(r, c, true);
    }
  }
  return out;
}

Normalizer::Normalizer(std::vector<ChannelRange> ranges) : ranges_(std::move(ranges)) {
  for (const auto& r : ranges_) {
    if (!(r.max >= r.min)) throw RasterError("normalizer range with max < min");
  }
}

double Normalizer::scale(std::size_t ch, double v) const {
  const ChannelRange& r = ranges_[ch];
  if (r.constant()) return 0.0;
  return (v - r.min) / (r.max - r.min);
}

double Normalizer::invert(std::size_t ch, double scaled) const {
  const ChannelRange& r = ranges_[ch];
  if (r.constant()) return r.min;
  return r.min + scaled * (r.max - r.min);
}

Normalizer fit_normalizer(std::span<const FieldRaster> rasters) {
  if (rasters.empty()) throw RasterError("fit_normalizer: no rasters");
  const std::size_t channels = rasters.front().channels();
  std::vector<ChannelRange> ranges(channels);
  bool seen = false;
  for (const FieldRaster& raster : rasters) {
    if (raster.channels() != channels) throw RasterError("fit_normalizer: channel count mismatch");
    for (std::size_t r = 0; r < raster.height(); ++r) {
      for (std::size_t c = 0; c < raster.width(); ++c) {
        if (!raster.in_field(r, c)) continue;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double v = raster.at(r, c, ch);
          if (!seen) {
            ranges[ch] = {v, v};
          } else {
            ranges[ch].min = std::min(ranges[ch].min, v);
            ranges[ch].max = std::max(ranges[ch].max, v);
          }
        }
        seen = true;
      }
    }
  }
  if (!seen) throw RasterError("fit_normalizer: no in-field cells");
  return Normalizer(std::move(ranges));
}

FieldRaster apply_normalizer(const FieldRaster& raster, const Normalizer& norm) {
  if (raster.channels() != norm.channels()) {
    throw RasterError("apply_normalizer: raster has " + std::to_string(raster.channels()) +
                      " channels, normalizer has " + std::to_string(norm.channels()));
  }
  FieldRaster out(raster.height(), raster.width(), raster.channels(), raster.cell_size());
  for (std::size_t r = 0; r < raster.height(); ++r) {
    for (std::size_t c = 0; c < raster.width(); ++c) {
      const bool inside = raster.in_field(r, c);
      out.set_in_field(r, c, inside);
      for (std::size_t ch = 0; ch < raster.channels(); ++ch) {
        out.at(r, c, ch) = inside ? norm.scale(ch, raster.at(r, c, ch)) : 0.0;
      }
    }
  }
  return out;
}

// --- FRST I/O ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'R', 'S', 'T'};
constexpr std::uint8_t kVersion = 0x01;
// Refuse absurd headers before allocating.
constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 32;

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>(bits & 0xff);
    bits >>= 8;
  }
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(std::string("FRST: truncated ") + what);
  }
  U bits = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) bits = (bits << 8) | bytes[i];
  return std::bit_cast<T>(bits);
}

}  // namespace

std::size_t frst_file_size(std::size_t height, std::size_t width, std::size_t channels) {
  return kFrstHeaderBytes + height * width * channels * 4 + height * width;
}

void write_raster(const FieldRaster& raster, std::ostream& out) {
  const auto limit = std::numeric_limits<std::uint32_t>::max();
  if (raster.height() > limit || raster.width() > limit || raster.channels() > limit) {
    throw FormatError("FRST: dimension overflow");
  }
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  put_le(out, static_cast<std::uint32_t>(raster.height()));
  put_le(out, static_cast<std::uint32_t>(raster.width()));
  put_le(out, static_cast<std::uint32_t>(raster.channels()));
  put_le(out, raster.cell_size());
  for (double v : raster.values()) put_le(out, static_cast<float>(v));
  const auto mask = raster.mask();
  out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
  if (!out) throw RasterError("FRST: write failed");
}

void write_raster(const FieldRaster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RasterError("cannot open " + path.string() + " for writing");
  write_raster(raster, out);
}

FieldRaster read_raster(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("FRST: truncated magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("FRST: bad magic");
  const int version = in.get();
  if (version == std::char_traits<char>::eof()) throw FormatError("FRST: truncated version");
  if (version != kVersion) throw FormatError("FRST: unsupported version " + std::to_string(version));
  const auto height = get_le<std::uint32_t>(in, "height");
  const auto width = get_le<std::uint32_t>(in, "width");
  const auto channels = get_le<std::uint32_t>(in, "channels");
  const auto cell_size = get_le<double>(in, "cell_size");
  const std::uint64_t cells = std::uint64_t{height} * width;
  if (cells > kMaxValues || (channels != 0 && cells > kMaxValues / channels)) {
    throw FormatError("FRST: dimension overflow");
  }
  FieldRaster raster(height, width, channels, cell_size);
  auto values = raster.values();
  std::vector<char> buffer(values.size() * 4);
  if (!in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()))) {
    throw FormatError("FRST: truncated payload");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 4; b-- > 0;) {
      bits = (bits << 8) | static_cast<unsigned char>(buffer[i * 4 + b]);
    }
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  auto mask = raster.mask();
  if (!in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()))) {
    throw FormatError("FRST: truncated mask");
  }
  for (auto& m : mask) {
    if (m > 1) throw FormatError("FRST: mask byte is not 0/1");
  }
  return raster;
}

FieldRaster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open " + path.string());
  return read_raster(in);
}

FieldRaster read_raster_csv(const std::filesystem::path& path, std::size_t height,
                            std::size_t width, std::size_t channels, double cell_size) {
  std::ifstream in(path);
  if (!in) throw RasterError("cannot open " + path.string());
  FieldRaster raster(height, width, channels, cell_size);
  std::vector<std::uint8_t> seen(height * width * channels, 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    long long row = 0, col = 0, ch = 0;
    double value = 0.0;
    if (!(fields >> row >> col >> ch >> value)) {
      if (line_no == 1) continue;  // header
      throw FormatError("raster CSV: malformed line " + std::to_string(line_no));
    }
    if (row < 0 || col < 0 || ch < 0 || static_cast<std::size_t>(row) >= height ||
        static_cast<std::size_t>(col) >= width || static_cast<std::size_t>(ch) >= channels) {
      throw FormatError("raster CSV: index out of range on line " + std::to_string(line_no));
    }
    const auto r = static_cast<std::size_t>(row);
    const auto c = static_cast<std::size_t>(col);
    const auto k = static_cast<std::size_t>(ch);
    raster.at(r, c, k) = value;
    seen[(r * width + c) * channels + k] = 1;
  }
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      bool complete = true;
      for (std::size_t k = 0; k < channels; ++k) {
        complete = complete && seen[(r * width + c) * channels + k];
      }
      raster.set_in_field(r, c, complete);
    }
  }
  raster.finalize();
  return raster;
}

}  // namespace hyper3d
