#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ivgan/apps.hpp"  // to_grayscale for gray-space PSNR

namespace ivgan {

// ---------------------------------------------------------------------------
// small binary-IO helpers (little-endian on all supported targets)
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t crc32_update(uint32_t crc, const void* buf, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(buf);
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

struct ByteWriter {
  std::string bytes;
  void raw(const void* p, size_t n) {
    bytes.append(static_cast<const char*>(p), n);
  }
  void u32(uint32_t v) { raw(&v, 4); }
  void u8(uint8_t v) { raw(&v, 1); }
  void f32s(const float* p, size_t n) { raw(p, n * 4); }
};

struct ByteReader {
  const std::string& bytes;
  size_t pos = 0;
  void raw(void* p, size_t n) {
    if (pos + n > bytes.size())
      throw std::runtime_error("file truncated");
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint8_t u8() {
    uint8_t v;
    raw(&v, 1);
    return v;
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Atomic write: temp file in the same directory, then rename over the target.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IVGC checkpoint: named f32 tensors with a trailing CRC32
// ---------------------------------------------------------------------------

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline std::string checkpoint_bytes(const NamedTensors& tensors) {
  detail::ByteWriter payload;
  payload.u32(uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    payload.u32(uint32_t(name.size()));
    payload.raw(name.data(), name.size());
    payload.u32(uint32_t(t.ndim()));
    for (int64_t i = 0; i < t.ndim(); ++i) payload.u32(uint32_t(t.extent(i)));
    payload.u8(0);  // dtype code 0 = f32
    payload.f32s(t.data(), size_t(t.numel()));
  }
  detail::ByteWriter out;
  out.raw("IVGC", 4);
  out.u32(1);  // format version
  out.bytes += payload.bytes;
  out.u32(detail::crc32_update(0, payload.bytes.data(), payload.bytes.size()));
  return out.bytes;
}

inline void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  detail::write_file_atomic(path, checkpoint_bytes(tensors));
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::string bytes = detail::read_file(path);
  detail::ByteReader in{bytes};
  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, "IVGC", 4) != 0)
    throw std::runtime_error(path + ": not an IVGC checkpoint");
  uint32_t version = in.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  if (bytes.size() < in.pos + 4)
    throw std::runtime_error(path + ": truncated checkpoint");
  size_t payload_begin = in.pos;
  size_t payload_len = bytes.size() - payload_begin - 4;
  uint32_t want_crc;
  std::memcpy(&want_crc, bytes.data() + bytes.size() - 4, 4);
  uint32_t got_crc =
      detail::crc32_update(0, bytes.data() + payload_begin, payload_len);
  if (got_crc != want_crc)
    throw std::runtime_error(path + ": checkpoint CRC mismatch");

  NamedTensors tensors;
  uint32_t count = in.u32();
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = in.u32();
    std::string name(name_len, '\0');
    in.raw(name.data(), name_len);
    uint32_t ndim = in.u32();
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = int64_t(in.u32());
    uint8_t dtype = in.u8();
    if (dtype != 0)
      throw std::runtime_error(path + ": unknown dtype code " +
                               std::to_string(dtype));
    Tensor<float> t(shape);
    in.raw(t.data(), size_t(t.numel()) * 4);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

// ---------------------------------------------------------------------------
// .ivc clip file
// ---------------------------------------------------------------------------

inline std::string clip_bytes(const Clip& clip) {
  check_clip(clip, "save_clip");
  detail::ByteWriter out;
  out.raw("IVCL", 4);
  out.u32(1);  // version
  for (int64_t i = 0; i < 4; ++i) out.u32(uint32_t(clip.extent(i)));
  out.f32s(clip.data(), size_t(clip.numel()));
  return out.bytes;
}

inline void save_clip(const std::string& path, const Clip& clip) {
  detail::write_file_atomic(path, clip_bytes(clip));
}

inline Clip load_clip(const std::string& path) {
  std::string bytes = detail::read_file(path);
  detail::ByteReader in{bytes};
  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, "IVCL", 4) != 0)
    throw std::runtime_error(path + ": not an .ivc clip file");
  uint32_t version = in.u32();
  if (version != 1)
    throw std::runtime_error(path + ": unsupported clip version " +
                             std::to_string(version));
  Shape shape(4);
  for (int64_t i = 0; i < 4; ++i) shape[i] = int64_t(in.u32());
  Clip clip(shape);
  if (bytes.size() - in.pos != size_t(clip.numel()) * 4)
    throw std::runtime_error(path + ": header inconsistent with payload length");
  in.raw(clip.data(), size_t(clip.numel()) * 4);
  return clip;
}

// ---------------------------------------------------------------------------
// PPM frame export
// ---------------------------------------------------------------------------

// [-1,1] -> [0,255] via (v+1)/2*255, round half up; 0 maps to byte 128
inline uint8_t to_byte(float v) {
  double scaled = (double(v) + 1.0) / 2.0 * 255.0;
  double b = std::floor(scaled + 0.5);
  return uint8_t(std::clamp(b, 0.0, 255.0));
}

// One binary PPM (P6) per frame; zero-padded frame indices in the names.
// Grayscale clips (C=1) are replicated to RGB.
inline std::vector<std::string> export_frames(const Clip& clip,
                                              const std::string& dir,
                                              const std::string& stem = "frame") {
  if (clip.ndim() != 4 || (clip.extent(3) != 1 && clip.extent(3) != 3))
    throw std::invalid_argument("export_frames: clip must be (T,H,W,1|3)");
  std::filesystem::path d(dir);
  if (!std::filesystem::is_directory(d))
    throw std::runtime_error("export_frames: not a directory: " + dir);
  int64_t t = clip.extent(0), h = clip.extent(1), w = clip.extent(2),
          c = clip.extent(3);
  int width = int(std::to_string(std::max<int64_t>(t - 1, 0)).size());
  width = std::max(width, 4);
  std::vector<std::string> paths;
  for (int64_t ti = 0; ti < t; ++ti) {
    std::ostringstream name;
    name << stem << "_" << std::setw(width) << std::setfill('0') << ti << ".ppm";
    std::ostringstream body;
    body << "P6\n" << w << " " << h << "\n255\n";
    for (int64_t i = 0; i < h * w; ++i) {
      const float* px = clip.data() + (ti * h * w + i) * c;
      for (int64_t ch = 0; ch < 3; ++ch)
        body << char(to_byte(px[c == 1 ? 0 : ch]));
    }
    std::string path = (d / name.str()).string();
    detail::write_file_atomic(path, body.str());
    paths.push_back(path);
  }
  return paths;
}

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

inline constexpr double kPsnrCapDb = 99.0;  // sentinel for MSE = 0

enum class PsnrSpace { Gray, Rgb };

// PSNR with values mapped to [0,1] (MAX = 1): 10*log10(1/MSE), capped at
// 99 dB when the clips are identical.
inline double psnr(const Clip& a, const Clip& b,
                   PsnrSpace space = PsnrSpace::Gray) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("psnr: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor<float> xa = a, xb = b;
  if (space == PsnrSpace::Gray && a.shape().back() == 3) {
    xa = to_grayscale(a);
    xb = to_grayscale(b);
  }
  double mse = 0;
  for (int64_t i = 0; i < xa.numel(); ++i) {
    // map [-1,1] -> [0,1]
    double d = (double(xa[i]) - double(xb[i])) / 2.0;
    mse += d * d;
  }
  mse /= double(xa.numel());
  if (mse == 0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

// ---------------------------------------------------------------------------
// metrics: line-delimited JSON
// ---------------------------------------------------------------------------

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path)
      : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path);
  }

  void write_line(const std::string& json) {
    out_ << json << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace ivgan
