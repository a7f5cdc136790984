#pragma once

// Wire formats and compression accounting.
//
// HTVT token stream:
//   "HTVT" | u8 version=1 | u8 layer count M (bit 7: masked mode)
//   per layer, coarsest first: u8 quant_dim | u16 T | u16 H | u16 W
//   payload: per layer in the same order, indices packed MSB-first at
//   quant_dim bits each, zero-padded to a byte at the end of the stream.
// In masked mode a layer's quant_dim byte carries bit 7 (layer is masked) and
// the substitution strategy in bits 5-6; its payload is a 1-bit-per-position
// bitmap (1 = masked) followed by the unmasked indices only.
//
// HTVV video: "HTVV" | u8 version=1 | u16 T, H, W | u8 C | T*H*W*C bytes,
// frame-major, row-major, channel-last; intensity = byte / 255.
//
// Multibyte header integers are little-endian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "hitok/config.hpp"
#include "hitok/error.hpp"
#include "hitok/io.hpp"
#include "hitok/lfq.hpp"
#include "hitok/video.hpp"

namespace hitok {

struct LayerTokens {
  std::size_t quant_dim = 1;
  Dims3 shape;
  std::vector<std::uint32_t> indices;  // raster order (t, h, w)
  // Empty when the layer is not masked; otherwise one flag per position.
  std::vector<std::uint8_t> mask;
  MaskStrategy strategy = MaskStrategy::kNone;

  bool masked() const { return !mask.empty(); }
  friend bool operator==(const LayerTokens&, const LayerTokens&) = default;
};

// Per-layer token grids; index 0 is the densest layer.
struct HierTokenStream {
  std::vector<LayerTokens> layers;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.indices.size();
    return n;
  }
  friend bool operator==(const HierTokenStream&, const HierTokenStream&) = default;
};

// ---------------------------------------------------------------------------
// Accounting

// Input pixels (T*H*W) per token.
inline double compression_ratio(const Dims3& input, std::size_t tokens) {
  if (tokens < 1) throw UsageError("compression_ratio: tokens must be >= 1");
  return static_cast<double>(input.count()) / static_cast<double>(tokens);
}

inline std::uint64_t payload_bits(const HierarchyConfig& cfg) {
  std::uint64_t bits = 0;
  for (const auto& l : cfg.layers) bits += static_cast<std::uint64_t>(l.token_count()) * l.quant_dim;
  return bits;
}

// Code bits per input pixel: sum_m N_m * quant_dim_m / (T*H*W).
inline double bits_per_pixel(const HierarchyConfig& cfg) {
  return static_cast<double>(payload_bits(cfg)) / static_cast<double>(cfg.input.count());
}

// ---------------------------------------------------------------------------
// Bit packing

class BitWriter {
 public:
  void put(std::uint32_t value, std::size_t bits) {
    for (std::size_t i = bits; i-- > 0;) {
      if (bit_ % 8 == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() = static_cast<char>(bytes_.back() | (0x80 >> (bit_ % 8)));
      ++bit_;
    }
  }
  std::size_t bit_count() const { return bit_; }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
  std::size_t bit_ = 0;
};

class BitReader {
 public:
  BitReader(const std::string& buf, std::size_t byte_offset) : buf_(buf), bit_(byte_offset * 8) {}

  std::uint32_t get(std::size_t bits) {
    if (bit_ + bits > buf_.size() * 8) throw FormatError(FormatErrc::kTruncated, "token stream: payload truncated");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < bits; ++i, ++bit_) {
      const auto byte = static_cast<unsigned char>(buf_[bit_ / 8]);
      v = (v << 1) | ((byte >> (7 - bit_ % 8)) & 1u);
    }
    return v;
  }
  std::size_t bit_pos() const { return bit_; }

 private:
  const std::string& buf_;
  std::size_t bit_;
};

// ---------------------------------------------------------------------------
// HTVT token stream

namespace htvt {

inline constexpr char kMagic[4] = {'H', 'T', 'V', 'T'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kMaskedFlag = 0x80;

inline std::uint8_t strategy_code(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kRepeatPrev: return 1;
    case MaskStrategy::kZero: return 2;
    case MaskStrategy::kLearned: return 3;
    case MaskStrategy::kNone: break;
  }
  throw UsageError("token stream: masked layer without a strategy");
}

inline MaskStrategy strategy_from_code(std::uint8_t c) {
  switch (c) {
    case 1: return MaskStrategy::kRepeatPrev;
    case 2: return MaskStrategy::kZero;
    case 3: return MaskStrategy::kLearned;
    default: throw FormatError(FormatErrc::kInvalidField, "token stream: bad mask strategy code");
  }
}

inline void validate(const HierTokenStream& s) {
  if (s.layers.empty() || s.layers.size() > 127) throw UsageError("token stream: layer count must be in [1, 127]");
  for (const auto& l : s.layers) {
    lfq::check_quant_dim(l.quant_dim);
    if (l.shape.t > 0xffff || l.shape.h > 0xffff || l.shape.w > 0xffff) throw UsageError("token stream: extent exceeds u16");
    if (l.indices.size() != l.shape.count()) throw UsageError("token stream: index count does not match layer shape");
    if (l.masked() && l.mask.size() != l.indices.size()) throw UsageError("token stream: mask size mismatch");
    for (const auto idx : l.indices) {
      if (idx >= (std::uint32_t{1} << l.quant_dim)) throw UsageError("token stream: index exceeds vocabulary");
    }
  }
}

inline std::string encode(const HierTokenStream& s) {
  validate(s);
  bool any_masked = false;
  for (const auto& l : s.layers) any_masked = any_masked || l.masked();
  std::string out(kMagic, 4);
  io::put_le<std::uint8_t>(out, kVersion);
  io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.layers.size() | (any_masked ? kMaskedFlag : 0)));
  for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
    std::uint8_t qd = static_cast<std::uint8_t>(it->quant_dim);
    if (it->masked()) qd = static_cast<std::uint8_t>(qd | kMaskedFlag | (strategy_code(it->strategy) << 5));
    io::put_le<std::uint8_t>(out, qd);
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(it->shape.t));
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(it->shape.h));
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(it->shape.w));
  }
  BitWriter bw;
  for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
    if (it->masked()) {
      for (const auto m : it->mask) bw.put(m ? 1u : 0u, 1);
    }
    for (std::size_t i = 0; i < it->indices.size(); ++i) {
      if (it->masked() && it->mask[i]) continue;
      bw.put(it->indices[i], it->quant_dim);
    }
  }
  return out + bw.bytes();
}

inline std::size_t header_size(std::size_t layers) { return 6 + 7 * layers; }

// Masked positions decode with index 0; the decoder substitutes them.
inline HierTokenStream decode(const std::string& buf) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError(FormatErrc::kBadMagic, "token stream: bad magic");
  io::ByteReader r(buf, "token stream");
  r.get_bytes(4);
  if (const auto v = r.get_le<std::uint8_t>(); v != kVersion) {
    throw FormatError(FormatErrc::kVersionMismatch, "token stream: unsupported version " + std::to_string(v));
  }
  const auto m_byte = r.get_le<std::uint8_t>();
  const bool masked_mode = (m_byte & kMaskedFlag) != 0;
  const std::size_t m = m_byte & 0x7f;
  if (m == 0) throw FormatError(FormatErrc::kInvalidField, "token stream: zero layers");
  HierTokenStream s;
  s.layers.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    auto& l = s.layers[m - 1 - k];
    const auto qd_byte = r.get_le<std::uint8_t>();
    l.quant_dim = qd_byte & 0x1f;
    const bool layer_masked = (qd_byte & kMaskedFlag) != 0;
    if (layer_masked && !masked_mode) throw FormatError(FormatErrc::kInvalidField, "token stream: masked layer outside masked mode");
    if (layer_masked) {
      l.strategy = strategy_from_code(static_cast<std::uint8_t>((qd_byte >> 5) & 0x3));
    } else if (qd_byte & 0x60) {
      throw FormatError(FormatErrc::kInvalidField, "token stream: reserved bits set");
    }
    if (l.quant_dim < 1 || l.quant_dim > lfq::kMaxQuantDim) throw FormatError(FormatErrc::kInvalidField, "token stream: bad quant_dim");
    l.shape.t = r.get_le<std::uint16_t>();
    l.shape.h = r.get_le<std::uint16_t>();
    l.shape.w = r.get_le<std::uint16_t>();
    l.indices.assign(l.shape.count(), 0);
    if (layer_masked) l.mask.assign(l.shape.count(), 0);
  }
  BitReader br(buf, r.pos());
  for (std::size_t k = 0; k < m; ++k) {
    auto& l = s.layers[m - 1 - k];
    if (l.masked()) {
      for (auto& f : l.mask) f = static_cast<std::uint8_t>(br.get(1));
    }
    for (std::size_t i = 0; i < l.indices.size(); ++i) {
      if (l.masked() && l.mask[i]) continue;
      l.indices[i] = br.get(l.quant_dim);
    }
  }
  const std::size_t expected = (br.bit_pos() + 7) / 8;
  if (buf.size() != expected) throw FormatError(FormatErrc::kInvalidField, "token stream: trailing bytes after payload");
  return s;
}

inline void write(const HierTokenStream& s, const std::string& path) { io::write_file(path, encode(s)); }
inline HierTokenStream read(const std::string& path) { return decode(io::read_file(path)); }

}  // namespace htvt

// ---------------------------------------------------------------------------
// HTVV video

namespace htvv {

inline constexpr char kMagic[4] = {'H', 'T', 'V', 'V'};
inline constexpr std::uint8_t kVersion = 1;

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

inline std::string encode(const VideoBlock& v) {
  if (v.t > 0xffff || v.h > 0xffff || v.w > 0xffff || v.c > 0xff || v.c == 0) throw UsageError("video: extents out of range");
  std::string out(kMagic, 4);
  io::put_le<std::uint8_t>(out, kVersion);
  io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v.t));
  io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v.h));
  io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v.w));
  io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(v.c));
  out.reserve(out.size() + v.size());
  for (const float x : v.values) out.push_back(static_cast<char>(to_byte(x)));
  return out;
}

inline VideoBlock decode(const std::string& buf) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError(FormatErrc::kBadMagic, "video: bad magic");
  io::ByteReader r(buf, "video");
  r.get_bytes(4);
  if (const auto ver = r.get_le<std::uint8_t>(); ver != kVersion) {
    throw FormatError(FormatErrc::kVersionMismatch, "video: unsupported version " + std::to_string(ver));
  }
  const std::size_t t = r.get_le<std::uint16_t>(), h = r.get_le<std::uint16_t>(), w = r.get_le<std::uint16_t>();
  const std::size_t c = r.get_le<std::uint8_t>();
  VideoBlock v(t, h, w, c);
  if (r.remaining() < v.size()) throw FormatError(FormatErrc::kTruncated, "video: payload truncated");
  if (r.remaining() > v.size()) throw FormatError(FormatErrc::kInvalidField, "video: trailing bytes after payload");
  const std::string payload = r.get_bytes(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v.values[i] = static_cast<float>(static_cast<unsigned char>(payload[i])) / 255.f;
  return v;
}

// Rounds intensities to the 8-bit grid the file stores.
inline VideoBlock quantize_to_file_precision(const VideoBlock& v) {
  VideoBlock q = v;
  for (auto& x : q.values) x = static_cast<float>(to_byte(x)) / 255.f;
  return q;
}

inline void write(const VideoBlock& v, const std::string& path) { io::write_file(path, encode(v)); }
inline VideoBlock read(const std::string& path) { return decode(io::read_file(path)); }

}  // namespace htvv

// Writes one binary PPM (P6, maxval 255) per frame as DIR/frame_0000.ppm ...
// Single-channel clips are written as gray.
inline std::vector<std::string> export_frames(const VideoBlock& v, const std::string& dir) {
  if (v.c != 1 && v.c != 3) throw UsageError("export_frames: only 1- or 3-channel clips can be written as PPM");
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (std::size_t t = 0; t < v.t; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.ppm", t);
    std::string bytes = "P6\n" + std::to_string(v.w) + " " + std::to_string(v.h) + "\n255\n";
    for (std::size_t y = 0; y < v.h; ++y) {
      for (std::size_t x = 0; x < v.w; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) bytes.push_back(static_cast<char>(htvv::to_byte(v.at(t, y, x, v.c == 1 ? 0 : ch))));
      }
    }
    const std::string path = (std::filesystem::path(dir) / name).string();
    io::write_file(path, bytes);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace hitok
