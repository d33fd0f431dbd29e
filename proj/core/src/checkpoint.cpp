#include "hyper3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hyper3d {
namespace {

constexpr char kMagic[4] = {'H', '3', 'D', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  void bytes(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) {
      buf[i] = static_cast<char>(v & 0xff);
      v >>= 8;
    }
    out_.write(buf, n);
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() { return std::bit_cast<double>(bytes(8)); }
  std::string str() {
    const std::uint32_t len = u32();
    if (len > 4096) throw FormatError("checkpoint: implausible name length");
    std::string s(len, '\0');
    if (!in_.read(s.data(), len)) throw FormatError("checkpoint: truncated name");
    return s;
  }

 private:
  std::uint64_t bytes(int n) {
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), n)) throw FormatError("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int i = n; i-- > 0;) v = (v << 8) | buf[i];
    return v;
  }
  std::istream& in_;
};

}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out) {
  Writer w(out);
  out.write(kMagic, 4);
  w.u32(kVersion);
  const ModelConfig& c = checkpoint.config;
  w.u64(c.window);
  w.u64(c.channels);
  w.u64(c.out_size);
  w.f64(c.dropout_rate);
  w.u64(c.conv3d_filters);
  w.u32(static_cast<std::uint32_t>(c.sepconv_filters.size()));
  for (std::size_t f : c.sepconv_filters) w.u64(f);
  w.f64(c.bn_momentum);
  w.f64(c.bn_epsilon);

  w.u32(static_cast<std::uint32_t>(checkpoint.params.size()));
  for (const ParamBlock& block : checkpoint.params) {
    w.str(block.name);
    w.u8(block.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(block.value.rank()));
    for (std::size_t d : block.value.shape()) w.u64(d);
    for (double v : block.value.values()) w.f64(v);
  }
  w.u8(checkpoint.normalizer ? 1 : 0);
  if (checkpoint.normalizer) {
    w.u32(static_cast<std::uint32_t>(checkpoint.normalizer->channels()));
    for (const ChannelRange& r : checkpoint.normalizer->ranges()) {
      w.f64(r.min);
      w.f64(r.max);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(checkpoint, out);
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  Reader r(in);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint cp;
  ModelConfig& c = cp.config;
  c.window = r.u64();
  c.channels = r.u64();
  c.out_size = r.u64();
  c.dropout_rate = r.f64();
  c.conv3d_filters = r.u64();
  const std::uint32_t widths = r.u32();
  if (widths > 64) throw FormatError("checkpoint: implausible layer count");
  c.sepconv_filters.assign(widths, 0);
  for (auto& f : c.sepconv_filters) f = r.u64();
  c.bn_momentum = r.f64();
  c.bn_epsilon = r.f64();

  const std::uint32_t blocks = r.u32();
  for (std::uint32_t b = 0; b < blocks; ++b) {
    std::string name = r.str();
    const bool trainable = r.u8() != 0;
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    Shape shape(rank);
    std::uint64_t volume = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d != 0 && volume > kMaxElements / d) throw FormatError("checkpoint: dimension overflow");
      volume *= d;
    }
    Tensor value(std::move(shape));
    for (double& v : value.values()) v = r.f64();
    cp.params.add(std::move(name), std::move(value), trainable);
  }
  if (r.u8()) {
    const std::uint32_t channels = r.u32();
    if (channels > 4096) throw FormatError("checkpoint: implausible channel count");
    std::vector<ChannelRange> ranges(channels);
    for (auto& range : ranges) {
      range.min = r.f64();
      range.max = r.f64();
    }
    cp.normalizer = Normalizer(std::move(ranges));
  }
  return cp;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(in);
}

Hyper3DNetReg to_network(const Checkpoint& checkpoint) {
  return Hyper3DNetReg(checkpoint.config, checkpoint.params);
}

}  // namespace hyper3d
