#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hyper3d/raster.hpp"

namespace hyper3d {

enum class Palette { kGray, kHeat };
Palette parse_palette(const std::string& name);

/// 8-bit levels per cell: round(255 (v - min) / (max - min)) with min/max
/// over F, 128 everywhere in F for a constant raster, 0 outside F.
std::vector<std::uint8_t> quantize(const FieldRaster& raster);

/// Gray writes binary PGM (P5); heat writes binary PPM (P6) with a
/// blue-to-red ramp and black background.
std::vector<std::uint8_t> encode_image(const FieldRaster& raster, Palette palette);
void write_image(const FieldRaster& raster, Palette palette, const std::filesystem::path& path);

}  // namespace hyper3d
