#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "hyper3d/network.hpp"
#include "hyper3d/raster.hpp"

namespace hyper3d {

/// Everything needed to reproduce predictions: architecture, parameters
/// (with batch-norm running statistics) and the input scaling.
struct Checkpoint {
  ModelConfig config;
  NetworkParams params;
  std::optional<Normalizer> normalizer;

  bool operator==(const Checkpoint& other) const {
    return config == other.config && params == other.params && normalizer == other.normalizer;
  }
};

// Binary layout (little-endian): "H3DK", u32 version, config, u32 block
// count, blocks as (u32 name length, name, u8 trainable, u32 rank,
// u64 dims..., f64 values...), u8 has_normalizer, [u32 n, (f64 min,
// f64 max) x n].
void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Hyper3DNetReg to_network(const Checkpoint& checkpoint);

}  // namespace hyper3d
