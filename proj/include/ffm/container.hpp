#pragma once

// FFMP tensor containers and FFMW checkpoints.
//
// Layout (little-endian):
//   magic[4] "FFMP" | "FFMW", u32 version = 1, u32 count,
//   count x { u16 name_len, name bytes (UTF-8), u8 ndim, u32 dims[ndim], f32 payload },
//   FFMW only: trailing u64 training step.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ffm/error.hpp"
#include "ffm/tensor.hpp"

namespace ffm {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::string_view kTensorMagic = "FFMP";
inline constexpr std::string_view kCheckpointMagic = "FFMW";

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::uint64_t step = 0;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    le<std::uint32_t>(bits);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(FormatErrorKind::kTruncated,
                        std::string("while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  float f32(const char* what) {
    const auto bits = le<std::uint32_t>(what);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline void encode_tensors(ByteWriter& w, std::string_view magic, std::span<const NamedTensor> tensors) {
  std::set<std::string> seen;
  w.bytes(magic.data(), 4);
  w.le<std::uint32_t>(kContainerVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    if (!seen.insert(nt.name).second) {
      throw FormatError(FormatErrorKind::kInvalid, "duplicate tensor name '" + nt.name + "'");
    }
    if (nt.name.size() > 0xFFFF) throw FormatError(FormatErrorKind::kInvalid, "tensor name too long");
    if (nt.tensor.rank() > 0xFF) throw FormatError(FormatErrorKind::kInvalid, "tensor rank too large");
    if (shape_size(nt.tensor.shape()) != nt.tensor.size()) {
      throw FormatError(FormatErrorKind::kInvalid, "dims of '" + nt.name + "' disagree with data length");
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(nt.name.size()));
    w.bytes(nt.name.data(), nt.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : nt.tensor.vec()) w.f32(v);
  }
}

inline std::vector<NamedTensor> decode_tensors(ByteReader& r, std::string_view magic) {
  const std::string got = r.str(4, "magic");
  if (got != magic) {
    throw FormatError(FormatErrorKind::kBadMagic, "expected '" + std::string(magic) + "', found '" + got + "'");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "file version " + std::to_string(version) + ", reader supports " +
                          std::to_string(kContainerVersion));
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = r.le<std::uint16_t>("name length");
    NamedTensor nt;
    nt.name = r.str(len, "name");
    if (!seen.insert(nt.name).second) {
      throw FormatError(FormatErrorKind::kInvalid, "duplicate tensor name '" + nt.name + "'");
    }
    const auto ndim = r.le<std::uint8_t>("ndim");
    Shape shape(ndim);
    for (auto& d : shape) d = r.le<std::uint32_t>("dims");
    const std::size_t n = shape_size(shape);
    r.need(n * 4, "payload");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32("payload");
    nt.tensor = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_tensor_container(std::span<const NamedTensor> tensors) {
  detail::ByteWriter w;
  detail::encode_tensors(w, kTensorMagic, tensors);
  return w.take();
}

inline std::vector<NamedTensor> decode_tensor_container(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto out = detail::decode_tensors(r, kTensorMagic);
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::kInvalid, std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  detail::encode_tensors(w, kCheckpointMagic, ckpt.tensors);
  w.le<std::uint64_t>(ckpt.step);
  return w.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  Checkpoint ckpt;
  ckpt.tensors = detail::decode_tensors(r, kCheckpointMagic);
  ckpt.step = r.le<std::uint64_t>("step counter");
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::kInvalid, std::to_string(r.remaining()) + " trailing bytes");
  }
  return ckpt;
}

inline void write_tensor_container(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  detail::write_file_bytes(path, encode_tensor_container(tensors));
}

inline std::vector<NamedTensor> read_tensor_container(const std::filesystem::path& path) {
  return decode_tensor_container(detail::read_file_bytes(path));
}

inline void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

inline Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

/// Finds a tensor by name or returns nullptr.
inline const NamedTensor* find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace ffm
