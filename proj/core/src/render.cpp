#include "hyper3d/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

namespace hyper3d {
namespace {

// Piecewise-linear ramp through blue, cyan, yellow and red.
std::array<std::uint8_t, 3> heat(std::uint8_t level) {
  static constexpr std::array<std::array<double, 3>, 4> stops{
      {{30, 60, 200}, {40, 200, 220}, {240, 230, 60}, {200, 30, 30}}};
  const double t = level / 255.0 * 3.0;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(t), 2);
  const double f = t - static_cast<double>(k);
  std::array<std::uint8_t, 3> rgb{};
  for (std::size_t i = 0; i < 3; ++i) {
    rgb[i] = static_cast<std::uint8_t>(std::lround(stops[k][i] + f * (stops[k + 1][i] - stops[k][i])));
  }
  return rgb;
}

}  // namespace

Palette parse_palette(const std::string& name) {
  if (name == "gray" || name == "grey") return Palette::kGray;
  if (name == "heat") return Palette::kHeat;
  throw std::invalid_argument("unknown palette '" + name + "' (gray|heat)");
}

std::vector<std::uint8_t> quantize(const FieldRaster& raster) {
  if (raster.channels() != 1) {
    throw RasterError("render: expected a single-channel raster, got " +
                      std::to_string(raster.channels()) + " channels");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t r = 0; r < raster.height(); ++r) {
    for (std::size_t c = 0; c < raster.width(); ++c) {
      if (!raster.in_field(r, c)) continue;
      lo = std::min(lo, raster.at(r, c));
      hi = std::max(hi, raster.at(r, c));
    }
  }
  std::vector<std::uint8_t> levels(raster.cell_count(), 0);
  for (std::size_t r = 0; r < raster.height(); ++r) {
    for (std::size_t c = 0; c < raster.width(); ++c) {
      if (!raster.in_field(r, c)) continue;
      const double v = raster.at(r, c);
      levels[r * raster.width() + c] =
          hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
    }
  }
  return levels;
}

std::vector<std::uint8_t> encode_image(const FieldRaster& raster, Palette palette) {
  const auto levels = quantize(raster);
  const std::string header = std::string(palette == Palette::kGray ? "P5" : "P6") + "\n" +
                             std::to_string(raster.width()) + " " +
                             std::to_string(raster.height()) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (palette == Palette::kGray) {
      bytes.push_back(levels[i]);
    } else if (!raster.mask()[i]) {
      bytes.insert(bytes.end(), {0, 0, 0});
    } else {
      const auto rgb = heat(levels[i]);
      bytes.insert(bytes.end(), rgb.begin(), rgb.end());
    }
  }
  return bytes;
}

void write_image(const FieldRaster& raster, Palette palette, const std::filesystem::path& path) {
  const auto bytes = encode_image(raster, palette);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace hyper3d
