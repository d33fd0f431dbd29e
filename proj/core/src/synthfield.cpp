#include "hyper3d/synthfield.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hyper3d/random.hpp"

namespace hyper3d {
namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

/// Sum of random plane cosines with wavelengths in [min_wl, max_wl] cells,
/// scaled to roughly unit variance.
class SmoothField {
 public:
  SmoothField(Rng& rng, int terms, double min_wl, double max_wl) {
    for (int k = 0; k < terms; ++k) {
      const double wl = rng.uniform(min_wl, max_wl);
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      waves_.push_back({2.0 * std::numbers::pi / wl * std::cos(theta),
                        2.0 * std::numbers::pi / wl * std::sin(theta),
                        rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
    scale_ = std::sqrt(2.0 / terms);
  }
  double operator()(double r, double c) const {
    double v = 0.0;
    for (const Wave& w : waves_) v += std::cos(w.kr * r + w.kc * c + w.phase);
    return scale_ * v;
  }

 private:
  struct Wave {
    double kr, kc, phase;
  };
  std::vector<Wave> waves_;
  double scale_ = 1.0;
};

double yield_of(Response response, const std::array<double, kFeatureChannels>& x, double moisture) {
  switch (response) {
    case Response::kLinear: {
      const LinearResponse lin = linear_response();
      double y = lin.intercept;
      for (std::size_t j = 0; j < kFeatureChannels; ++j) y += lin.beta[j] * x[j];
      return y;
    }
    case Response::kNitrogenDominant:
      return 45.0 + 110.0 * (1.0 - std::exp(-x[kNitrogen] / 45.0)) + 4.0 * moisture -
             0.8 * x[kSlope];
    case Response::kInteractive: {
      const double water = 1.0 / (1.0 + std::exp(-(moisture + 0.02 * (x[kPrecipitation] - 90.0))));
      const double nitrogen = 1.0 - std::exp(-x[kNitrogen] / 40.0);
      const double south = std::cos((x[kAspect] - 180.0) / kDeg) * std::min(x[kSlope], 10.0) / 10.0;
      return 35.0 + 120.0 * water * (0.35 + 0.65 * nitrogen) - 6.0 * std::tanh(x[kTpi]) * nitrogen +
             5.0 * south;
    }
  }
  return 0.0;
}

}  // namespace

void SynthSpec::validate() const {
  if (height < 5 || width < 5) throw std::invalid_argument("synth: field must be at least 5x5 cells");
  if (years.empty()) throw std::invalid_argument("synth: no years");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise sigma must be >= 0");
  if (!(terrain_relief >= 0.0)) throw std::invalid_argument("synth: terrain relief must be >= 0");
  if (!(cell_size > 0.0)) throw std::invalid_argument("synth: cell size must be positive");
  for (std::size_t i = 0; i < years.size(); ++i) {
    for (std::size_t j = i + 1; j < years.size(); ++j) {
      if (years[i] == years[j]) throw std::invalid_argument("synth: duplicate year");
    }
  }
}

LinearResponse linear_response() {
  // VV, VH, nitrogen, precipitation, slope, elevation, TPI, aspect
  return {-160.0, {1.5, 1.0, 0.4, 0.3, -2.0, 0.25, -3.0, 0.01}};
}

Terrain derive_terrain(const std::vector<double>& z, std::size_t height, std::size_t width,
                       double cell_size) {
  if (z.size() != height * width || height < 2 || width < 2) {
    throw std::invalid_argument("derive_terrain: elevation grid must be at least 2x2");
  }
  Terrain t;
  t.slope.resize(z.size());
  t.aspect.resize(z.size());
  t.tpi.resize(z.size());
  auto at = [&](std::size_t r, std::size_t c) { return z[r * width + c]; };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double dzdx;  // east
      if (c == 0) {
        dzdx = (at(r, 1) - at(r, 0)) / cell_size;
      } else if (c + 1 == width) {
        dzdx = (at(r, c) - at(r, c - 1)) / cell_size;
      } else {
        dzdx = (at(r, c + 1) - at(r, c - 1)) / (2.0 * cell_size);
      }
      double dzdy;  // north, i.e. decreasing row
      if (r == 0) {
        dzdy = (at(0, c) - at(1, c)) / cell_size;
      } else if (r + 1 == height) {
        dzdy = (at(r - 1, c) - at(r, c)) / cell_size;
      } else {
        dzdy = (at(r - 1, c) - at(r + 1, c)) / (2.0 * cell_size);
      }
      const std::size_t i = r * width + c;
      t.slope[i] = std::atan(std::hypot(dzdx, dzdy)) * kDeg;
      if (dzdx == 0.0 && dzdy == 0.0) {
        t.aspect[i] = 0.0;
      } else {
        double a = std::atan2(-dzdx, -dzdy) * kDeg;
        if (a < 0.0) a += 360.0;
        if (a >= 360.0) a -= 360.0;
        t.aspect[i] = a;
      }
      double sum = 0.0;
      int count = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
          const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(height) ||
              cc >= static_cast<std::ptrdiff_t>(width)) {
            continue;
          }
          sum += at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
          ++count;
        }
      }
      t.tpi[i] = at(r, c) - sum / count;
    }
  }
  return t;
}

SynthField generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width, cells = H * W;

  Rng terrain_rng(mix_seed(spec.seed, 1));
  const SmoothField relief(terrain_rng, 6, 12.0, 40.0);
  std::vector<double> elevation(cells);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      elevation[r * W + c] =
          900.0 + 0.5 * spec.terrain_relief * relief(static_cast<double>(r), static_cast<double>(c));
    }
  }
  const Terrain terrain = derive_terrain(elevation, H, W, spec.cell_size);

  std::vector<std::uint8_t> mask(cells, 1);
  if (spec.boundary == Boundary::kBlob) {
    Rng mask_rng(mix_seed(spec.seed, 2));
    const SmoothField wobble(mask_rng, 5, 10.0, 24.0);
    const double cr = 0.5 * static_cast<double>(H - 1), cc = 0.5 * static_cast<double>(W - 1);
    const double ar = 0.46 * static_cast<double>(H), ac = 0.46 * static_cast<double>(W);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const double dr = (static_cast<double>(r) - cr) / ar;
        const double dc = (static_cast<double>(c) - cc) / ac;
        const double threshold =
            1.0 + 0.18 * wobble(static_cast<double>(r), static_cast<double>(c));
        mask[r * W + c] = dr * dr + dc * dc <= threshold ? 1 : 0;
      }
    }
  }

  static constexpr std::array<double, 5> kRates{0.0, 30.0, 60.0, 90.0, 120.0};
  constexpr std::size_t kStripWidth = 4;

  SynthField field;
  for (std::size_t y = 0; y < spec.years.size(); ++y) {
    Rng rng(mix_seed(spec.seed, 100 + y));
    const double precipitation = rng.uniform(60.0, 120.0);
    std::vector<double> strip_rates((W + kStripWidth - 1) / kStripWidth);
    for (double& rate : strip_rates) rate = kRates[rng.below(kRates.size())];
    const SmoothField moisture_field(rng, 6, 10.0, 30.0);
    const SmoothField vv_field(rng, 5, 6.0, 20.0);
    const SmoothField vh_field(rng, 5, 6.0, 20.0);

    YearData data{spec.years[y], FieldRaster(H, W, kFeatureChannels, spec.cell_size),
                  FieldRaster(H, W, 1, spec.cell_size)};
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t i = r * W + c;
        const double rr = static_cast<double>(r), cc = static_cast<double>(c);
        // low ground collects water
        const double moisture = moisture_field(rr, cc) - 0.4 * std::tanh(terrain.tpi[i]);
        std::array<double, kFeatureChannels> x{};
        x[kVV] = -12.0 + 1.8 * moisture + 0.6 * vv_field(rr, cc);
        x[kVH] = -19.0 + 1.4 * moisture + 0.6 * vh_field(rr, cc);
        x[kNitrogen] = strip_rates[c / kStripWidth];
        x[kPrecipitation] = precipitation;
        x[kSlope] = terrain.slope[i];
        x[kElevation] = elevation[i];
        x[kTpi] = terrain.tpi[i];
        x[kAspect] = terrain.aspect[i];

        double yield = yield_of(spec.response, x, moisture);
        if (spec.noise_sigma > 0.0) yield += spec.noise_sigma * rng.normal();
        yield = std::max(yield, 0.0);

        if (!mask[i]) continue;
        for (std::size_t ch = 0; ch < kFeatureChannels; ++ch) data.features.at(r, c, ch) = x[ch];
        data.features.set_in_field(r, c, true);
        data.yield.at(r, c) = yield;
        data.yield.set_in_field(r, c, true);
      }
    }
    data.features.finalize();
    data.yield.finalize();
    field.years.push_back(std::move(data));
  }
  return field;
}

void write_field(const SynthField& field, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  manifest << "year,role,features,yield\n";
  for (std::size_t i = 0; i < field.years.size(); ++i) {
    const YearData& y = field.years[i];
    const std::string features = "features_" + std::to_string(y.year) + ".frst";
    const std::string yield = "yield_" + std::to_string(y.year) + ".frst";
    write_raster(y.features, dir / features);
    write_raster(y.yield, dir / yield);
    const bool test = field.years.size() > 1 && i + 1 == field.years.size();
    manifest << y.year << ',' << (test ? "test" : "train") << ',' << features << ',' << yield
             << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "year,role,features,yield") throw FormatError(path.string() + ": bad header");
  std::vector<ManifestEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string year;
    if (!std::getline(ss, year, ',') || !std::getline(ss, e.role, ',') ||
        !std::getline(ss, e.features, ',') || !std::getline(ss, e.yield)) {
      throw FormatError(path.string() + ": malformed line '" + line + "'");
    }
    e.year = std::stoi(year);
    entries.push_back(std::move(e));
  }
  return entries;
}

YearData load_year(const std::filesystem::path& dir, const ManifestEntry& entry) {
  YearData y{entry.year, read_raster(dir / entry.features), read_raster(dir / entry.yield)};
  if (!y.features.same_geometry(y.yield)) {
    throw RasterError("year " + std::to_string(entry.year) + ": feature and yield grids differ");
  }
  return y;
}

Boundary parse_boundary(const std::string& name) {
  if (name == "rectangular") return Boundary::kRectangular;
  if (name == "blob") return Boundary::kBlob;
  throw std::invalid_argument("unknown boundary '" + name + "' (rectangular|blob)");
}

Response parse_response(const std::string& name) {
  if (name == "linear") return Response::kLinear;
  if (name == "nitrogen") return Response::kNitrogenDominant;
  if (name == "interactive") return Response::kInteractive;
  throw std::invalid_argument("unknown response '" + name + "' (linear|nitrogen|interactive)");
}

}  // namespace hyper3d
