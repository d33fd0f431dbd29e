#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hyper3d/raster.hpp"
#include "hyper3d/sampling.hpp"

namespace hyper3d {

enum class Boundary { kRectangular, kBlob };
enum class Response { kLinear, kNitrogenDominant, kInteractive };

struct SynthSpec {
  std::size_t height = 48;
  std::size_t width = 48;
  std::vector<int> years{2016, 2018, 2020};
  std::uint64_t seed = 1;
  Boundary boundary = Boundary::kBlob;
  double noise_sigma = 4.0;  // bu/ac
  Response response = Response::kInteractive;
  double terrain_relief = 8.0;  // meters of elevation variation; 0 gives flat ground
  double cell_size = 10.0;

  void validate() const;
};

/// Ground truth of the linear family: yield = intercept + sum(beta * x)
/// on raw feature values, before noise.
struct LinearResponse {
  double intercept = 0.0;
  std::array<double, kFeatureChannels> beta{};
};
LinearResponse linear_response();

struct SynthField {
  std::vector<YearData> years;  // feature stack and yield per year
};

SynthField generate(const SynthSpec& spec);

// Terrain channels derived from an elevation grid (row 0 is north):
// central differences inside, one-sided differences on the edges.
struct Terrain {
  std::vector<double> slope;   // degrees
  std::vector<double> aspect;  // degrees clockwise from north of the downslope direction; 0 when flat
  std::vector<double> tpi;     // z minus mean of in-bounds 8-neighbours
};
Terrain derive_terrain(const std::vector<double>& elevation, std::size_t height, std::size_t width,
                       double cell_size);

struct ManifestEntry {
  int year = 0;
  std::string role;  // "train" or "test"
  std::string features;
  std::string yield;
};

/// features_<year>.frst and yield_<year>.frst per year plus manifest.csv
/// (`year,role,features,yield`); the last year is marked as the test year.
void write_field(const SynthField& field, const std::filesystem::path& dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
YearData load_year(const std::filesystem::path& dir, const ManifestEntry& entry);

Boundary parse_boundary(const std::string& name);
Response parse_response(const std::string& name);

}  // namespace hyper3d
