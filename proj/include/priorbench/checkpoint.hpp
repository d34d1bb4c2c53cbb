#pragma once

// Binary checkpoint container.
//
// All integers little-endian, reals IEEE-754 binary64 little-endian:
//
//   magic      8 bytes  "PBCKPT\x00\x01"
//   version    u32      (1)
//   objective  u32      0 = diffusion, 1 = flow
//   epoch      u64
//   seed       u64
//   cfg_hash   u64      FNV-1a of the canonical run config
//   shape      4 x i32  latent_dim, time_dim, cond_dim, hidden
//   n_arrays   u32
//   n_arrays times:
//     name_len u32, name bytes, rows u32, cols u32, rows*cols f64 (row-major)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "priorbench/objectives.hpp"
#include "priorbench/prior_net.hpp"

namespace priorbench {

inline constexpr std::array<char, 8> kCheckpointMagic = {'P', 'B', 'C', 'K', 'P', 'T', '\0', '\x01'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ObjectiveKind objective = ObjectiveKind::Flow;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  CheckpointMeta meta;
  PriorNetwork net;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

 private:
  void le(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out_.write(buf, n);
  }
  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw IoError("checkpoint: unexpected end of file");
  }

 private:
  std::uint64_t le(int n) {
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), n);
    if (!in_) throw IoError("checkpoint: unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  detail::ByteWriter w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(ckpt.meta.objective == ObjectiveKind::Diffusion ? 0u : 1u);
  w.u64(ckpt.meta.epoch);
  w.u64(ckpt.meta.seed);
  w.u64(ckpt.meta.config_hash);
  const NetworkShape& s = ckpt.net.shape();
  w.i32(s.latent_dim);
  w.i32(s.time_dim);
  w.i32(s.cond_dim);
  w.i32(s.hidden);
  const auto blocks = ckpt.net.blocks();
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  const double* data = ckpt.net.parameters().data();
  for (const auto& b : blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name.data(), b.name.size());
    w.u32(static_cast<std::uint32_t>(b.rows));
    w.u32(static_cast<std::uint32_t>(b.cols));
    for (Eigen::Index i = 0; i < b.rows * b.cols; ++i) w.f64(data[b.offset + i]);
  }
  if (!out) throw IoError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  detail::ByteReader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw IoError("checkpoint: bad magic header");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t objective = r.u32();
  if (objective > 1) throw IoError("checkpoint: unknown objective code");
  ckpt.meta.objective = objective == 0 ? ObjectiveKind::Diffusion : ObjectiveKind::Flow;
  ckpt.meta.epoch = r.u64();
  ckpt.meta.seed = r.u64();
  ckpt.meta.config_hash = r.u64();
  NetworkShape shape;
  shape.latent_dim = r.i32();
  shape.time_dim = r.i32();
  shape.cond_dim = r.i32();
  shape.hidden = r.i32();
  if (shape.latent_dim < 1 || shape.latent_dim > 4096 || shape.hidden < 1 || shape.hidden > 65536 ||
      shape.time_dim < 2 || shape.time_dim > 4096 || shape.cond_dim < 0 || shape.cond_dim > 4096) {
    throw IoError("checkpoint: implausible network shape");
  }
  ckpt.net = PriorNetwork(shape);
  const auto blocks = ckpt.net.blocks();
  const std::uint32_t count = r.u32();
  if (count != blocks.size()) throw IoError("checkpoint: unexpected array count");
  double* data = ckpt.net.parameters().data();
  for (const auto& b : blocks) {
    const std::uint32_t len = r.u32();
    if (len > 256) throw IoError("checkpoint: array name too long");
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (name != b.name || rows != b.rows || cols != b.cols) {
      throw IoError("checkpoint: array '" + name + "' does not match expected '" + b.name + "'");
    }
    for (Eigen::Index i = 0; i < b.rows * b.cols; ++i) data[b.offset + i] = r.f64();
  }
  if (!ckpt.net.parameters().allFinite()) throw IoError("checkpoint: non-finite parameters");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(ckpt, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint: " + path);
  return read_checkpoint(in);
}

}  // namespace priorbench
