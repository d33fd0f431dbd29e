#include "hyper3d/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "hyper3d/random.hpp"

namespace hyper3d {

std::size_t patch_stride(std::size_t window, double max_overlap) {
  if (!(max_overlap >= 0.0 && max_overlap < 1.0)) {
    throw std::invalid_argument("max_overlap must be in [0, 1)");
  }
  // tolerance keeps exact products such as 5 * 0.4 from rounding up
  const double raw = static_cast<double>(window) * (1.0 - max_overlap);
  const auto stride = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::max<std::size_t>(stride, 1);
}

std::vector<Sample> extract_patches(const FieldRaster& features, const FieldRaster& yield_map,
                                    const PatchSpec& spec, int year) {
  const std::size_t W = spec.window, N = spec.out_size;
  if (W == 0 || N == 0 || N > W || (W - N) % 2 != 0) {
    throw std::invalid_argument("extract_patches: need 0 < N <= W with W - N even");
  }
  if (!features.same_geometry(yield_map)) throw RasterError("extract_patches: geometry mismatch");
  if (yield_map.channels() != 1) throw RasterError("extract_patches: yield map must have one channel");
  if (features.height() < W || features.width() < W) {
    throw RasterError("extract_patches: raster smaller than the " + std::to_string(W) + "x" +
                      std::to_string(W) + " window");
  }
  const std::size_t stride = patch_stride(W, spec.max_overlap);
  const std::size_t offset = (W - N) / 2;
  const std::size_t n = features.channels();
  std::vector<Sample> samples;
  for (std::size_t r0 = 0; r0 + W <= features.height(); r0 += stride) {
    for (std::size_t c0 = 0; c0 + W <= features.width(); c0 += stride) {
      bool admissible = true;
      for (std::size_t i = 0; i < N && admissible; ++i) {
        for (std::size_t j = 0; j < N && admissible; ++j) {
          const std::size_t r = r0 + offset + i, c = c0 + offset + j;
          const double v = yield_map.at(r, c);
          admissible = yield_map.in_field(r, c) && std::isfinite(v) && v >= 0.0;
        }
      }
      if (!admissible) continue;
      Sample s;
      s.window = W;
      s.out_size = N;
      s.channels = n;
      s.origin = {r0, c0};
      s.year = year;
      s.x.resize(W * W * n);
      s.x_valid.resize(W * W);
      s.y.resize(N * N);
      for (std::size_t i = 0; i < W; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          const bool inside = features.in_field(r0 + i, c0 + j);
          s.x_valid[i * W + j] = inside ? 1 : 0;
          for (std::size_t ch = 0; ch < n; ++ch) {
            s.x[(i * W + j) * n + ch] = inside ? features.at(r0 + i, c0 + j, ch) : 0.0;
          }
        }
      }
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          s.y[i * N + j] = yield_map.at(r0 + offset + i, c0 + offset + j);
        }
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::vector<Sample> assemble_years(std::span<const YearData> years, const PatchSpec& spec) {
  std::vector<Sample> all;
  for (const YearData& y : years) {
    if (!years.empty() && (!y.features.same_geometry(years.front().features) ||
                           y.features.channels() != years.front().features.channels())) {
      throw RasterError("assemble_years: year " + std::to_string(y.year) +
                        " does not match the first year's grid");
    }
    auto patches = extract_patches(y.features, y.yield, spec, y.year);
    std::move(patches.begin(), patches.end(), std::back_inserter(all));
  }
  return all;
}

DatasetSplit split_train_val(std::vector<Sample> samples, std::uint64_t seed,
                             double train_fraction) {
  if (samples.size() < 10) {
    throw std::invalid_argument("split_train_val: need at least 10 samples, got " +
                                std::to_string(samples.size()));
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(samples.size()) - 1e-9));
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.validation).push_back(std::move(samples[order[i]]));
  }
  return split;
}

Normalizer fit_normalizer(std::span<const Sample> samples) {
  if (samples.empty()) throw RasterError("fit_normalizer: no samples");
  const std::size_t n = samples.front().channels;
  std::vector<ChannelRange> ranges(n);
  bool seen = false;
  for (const Sample& s : samples) {
    if (s.channels != n) throw RasterError("fit_normalizer: channel count mismatch");
    for (std::size_t cell = 0; cell < s.window * s.window; ++cell) {
      if (!s.x_valid[cell]) continue;
      for (std::size_t ch = 0; ch < n; ++ch) {
        const double v = s.x[cell * n + ch];
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
  if (!seen) throw RasterError("fit_normalizer: no in-field cells");
  return Normalizer(std::move(ranges));
}

void normalize_samples(std::span<Sample> samples, const Normalizer& norm) {
  for (Sample& s : samples) {
    if (s.channels != norm.channels()) throw RasterError("normalize_samples: channel mismatch");
    for (std::size_t cell = 0; cell < s.window * s.window; ++cell) {
      for (std::size_t ch = 0; ch < s.channels; ++ch) {
        double& v = s.x[cell * s.channels + ch];
        v = s.x_valid[cell] ? norm.scale(ch, v) : 0.0;
      }
    }
  }
}

Tensor batch_inputs(std::span<const Sample> samples, std::span<const std::size_t> order) {
  if (order.empty()) throw std::invalid_argument("batch_inputs: empty batch");
  const Sample& first = samples[order.front()];
  const std::size_t W = first.window, n = first.channels;
  Tensor x({order.size(), W, W, n, 1});
  for (std::size_t b = 0; b < order.size(); ++b) {
    const Sample& s = samples[order[b]];
    std::copy(s.x.begin(), s.x.end(), x.data() + b * W * W * n);
  }
  return x;
}

Tensor batch_targets(std::span<const Sample> samples, std::span<const std::size_t> order) {
  if (order.empty()) throw std::invalid_argument("batch_targets: empty batch");
  const std::size_t N = samples[order.front()].out_size;
  Tensor y = N == 1 ? Tensor({order.size(), 1}) : Tensor({order.size(), N, N});
  for (std::size_t b = 0; b < order.size(); ++b) {
    const Sample& s = samples[order[b]];
    std::copy(s.y.begin(), s.y.end(), y.data() + b * N * N);
  }
  return y;
}

void write_sample_dump(std::span<const Sample> samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream blocks(dir / "samples.frst", std::ios::binary);
  std::ofstream manifest(dir / "manifest.csv");
  if (!blocks || !manifest) throw std::runtime_error("cannot write sample dump to " + dir.string());
  manifest << "index,year,row,col\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    FieldRaster x(s.window, s.window, s.channels);
    FieldRaster y(s.out_size, s.out_size, 1);
    for (std::size_t r = 0; r < s.window; ++r) {
      for (std::size_t c = 0; c < s.window; ++c) {
        x.set_in_field(r, c, s.x_valid[r * s.window + c] != 0);
        for (std::size_t ch = 0; ch < s.channels; ++ch) x.at(r, c, ch) = s.feature(r, c, ch);
      }
    }
    for (std::size_t r = 0; r < s.out_size; ++r) {
      for (std::size_t c = 0; c < s.out_size; ++c) {
        y.set_in_field(r, c, true);
        y.at(r, c) = s.target(r, c);
      }
    }
    write_raster(x, blocks);
    write_raster(y, blocks);
    manifest << i << ',' << s.year << ',' << s.origin.row << ',' << s.origin.col << '\n';
  }
}

}  // namespace hyper3d
