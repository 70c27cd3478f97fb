#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "genview/errors.hpp"
#include "genview/tensor.hpp"

namespace genview {

// GVTF binary tensor container, version 1. Little-endian layout:
//   "GVTF" | u32 version | u32 record count
//   per record: u16 id length | id bytes | u8 dtype (1 = f32) | u8 rank |
//               rank x u32 dims | row-major f32 payload
// Header fields are validated against the file length before any payload
// allocation.
struct NamedTensor {
  std::string id;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline constexpr char kMagic[4] = {'G', 'V', 'T', 'F'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : stream_(path, std::ios::binary) {
    if (!stream_.is_open()) throw MissingInput("cannot open '" + path + "'");
    stream_.seekg(0, std::ios::end);
    remaining_ = static_cast<std::uint64_t>(stream_.tellg());
    stream_.seekg(0, std::ios::beg);
  }

  std::uint64_t remaining() const { return remaining_; }

  void read(void* out, std::uint64_t n) {
    if (n > remaining_) throw TruncatedFile("file ends inside a record");
    stream_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (!stream_) throw TruncatedFile("read failed before declared end");
    remaining_ -= n;
  }

  std::uint8_t u8() {
    std::uint8_t v;
    read(&v, 1);
    return v;
  }
  std::uint16_t u16() {
    std::uint8_t b[2];
    read(b, 2);
    return static_cast<std::uint16_t>(b[0] | (std::uint16_t(b[1]) << 8));
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    read(b, 4);
    return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }

 private:
  std::ifstream stream_;
  std::uint64_t remaining_ = 0;
};

class ByteWriter {
 public:
  explicit ByteWriter(const std::string& path) : stream_(path, std::ios::binary) {
    if (!stream_.is_open()) throw FormatError("cannot open '" + path + "' for writing");
  }

  void write(const void* data, std::size_t n) {
    stream_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { write(&v, 1); }
  void u16(std::uint16_t v) {
    const std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)};
    write(b, 2);
  }
  void u32(std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                               std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    write(b, 4);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }

  void finish() {
    stream_.flush();
    if (!stream_) throw FormatError("write failed");
  }

 private:
  std::ofstream stream_;
};

}  // namespace detail

inline std::vector<NamedTensor> read_container(const std::string& path) {
  detail::ByteReader in(path);

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, detail::kMagic, 4) != 0) {
    throw BadMagic("'" + path + "' is not a tensor container");
  }
  const std::uint32_t version = in.u32();
  if (version != detail::kVersion) {
    throw UnsupportedVersion("container version " + std::to_string(version) +
                             " is not supported");
  }
  const std::uint32_t count = in.u32();

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  std::unordered_set<std::string> seen;
  for (std::uint32_t r = 0; r < count; ++r) {
    NamedTensor t;
    const std::uint16_t id_len = in.u16();
    t.id.resize(id_len);
    in.read(t.id.data(), id_len);
    if (!seen.insert(t.id).second) {
      throw DuplicateId("duplicate tensor id '" + t.id + "'");
    }
    const std::uint8_t dtype = in.u8();
    if (dtype != detail::kDtypeF32) {
      throw FormatError("unknown dtype code " + std::to_string(dtype) +
                        " in tensor '" + t.id + "'");
    }
    const std::uint8_t rank = in.u8();
    t.dims.resize(rank);
    std::uint64_t elements = 1;
    for (int d = 0; d < rank; ++d) {
      t.dims[d] = in.u32();
      if (t.dims[d] != 0 &&
          elements > std::numeric_limits<std::uint64_t>::max() / t.dims[d]) {
        throw OversizeHeader("dimension product overflows in tensor '" + t.id + "'");
      }
      elements *= t.dims[d];
    }
    const std::uint64_t payload_bytes = elements * 4;
    if (payload_bytes > in.remaining()) {
      throw OversizeHeader("tensor '" + t.id + "' declares " +
                           std::to_string(elements) +
                           " elements past the end of the file");
    }
    t.values.resize(elements);
    for (std::uint64_t i = 0; i < elements; ++i) {
      const std::uint32_t bits = in.u32();
      float v;
      std::memcpy(&v, &bits, 4);
      t.values[i] = v;
    }
    tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing bytes after the last record in '" + path + "'");
  }
  return tensors;
}

inline void write_container(const std::string& path,
                            const std::vector<NamedTensor>& tensors) {
  std::unordered_set<std::string> seen;
  for (const auto& t : tensors) {
    if (t.id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidValue("tensor id too long: '" + t.id.substr(0, 32) + "...'");
    }
    if (t.dims.size() > 255) throw InvalidValue("tensor rank exceeds 255");
    if (t.element_count() != t.values.size()) {
      throw InvalidValue("tensor '" + t.id + "' payload does not match its dims");
    }
    if (!seen.insert(t.id).second) {
      throw DuplicateId("duplicate tensor id '" + t.id + "'");
    }
  }

  detail::ByteWriter out(path);
  out.write(detail::kMagic, 4);
  out.u32(detail::kVersion);
  out.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    out.u16(static_cast<std::uint16_t>(t.id.size()));
    out.write(t.id.data(), t.id.size());
    out.u8(detail::kDtypeF32);
    out.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) out.u32(d);
    for (float v : t.values) out.f32(v);
  }
  out.finish();
}

// Conversions between container records and the double-precision types.

inline NamedTensor to_tensor(const std::string& id, const FeatureMap& map) {
  NamedTensor t;
  t.id = id;
  t.dims = {static_cast<std::uint32_t>(map.height),
            static_cast<std::uint32_t>(map.width),
            static_cast<std::uint32_t>(map.channels)};
  t.values.assign(map.data.begin(), map.data.end());
  return t;
}

inline NamedTensor to_tensor(const std::string& id, const std::vector<double>& v) {
  NamedTensor t;
  t.id = id;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.values.assign(v.begin(), v.end());
  return t;
}

inline FeatureMap to_feature_map(const NamedTensor& t) {
  if (t.dims.size() != 3) {
    throw FormatError("tensor '" + t.id + "' is rank " +
                      std::to_string(t.dims.size()) + ", expected a rank-3 feature map");
  }
  FeatureMap map(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                 static_cast<int>(t.dims[2]));
  map.data.assign(t.values.begin(), t.values.end());
  return map;
}

inline EmbeddingVector to_embedding(const NamedTensor& t) {
  if (t.dims.size() != 1) {
    throw FormatError("tensor '" + t.id + "' is rank " +
                      std::to_string(t.dims.size()) + ", expected a rank-1 embedding");
  }
  return EmbeddingVector(t.values.begin(), t.values.end());
}

}  // namespace genview
