// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "gradpack/errors.hpp"

namespace gradpack {

/// Bit stream writer. Bits fill each byte LSB-first; multi-bit fields are
/// written least-significant bit first.
class BitWriter {
 public:
  void put_bit(bool b) {
    if (nbits_ % 8 == 0) bytes_.push_back(0);
    if (b) bytes_.back() |= static_cast<std::uint8_t>(1u << (nbits_ % 8));
    ++nbits_;
  }

  /// pre: width <= 64; value's bits above width are ignored.
  void put_bits(std::uint64_t value, unsigned width) {
    for (unsigned i = 0; i < width; ++i) put_bit((value >> i) & 1u);
  }

  void put_byte(std::uint8_t b) { put_bits(b, 8); }

  std::uint64_t bit_count() const noexcept { return nbits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t nbits_ = 0;
};

/// Bit stream reader matching BitWriter's LSB-first layout.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) noexcept : bytes_(bytes) {}

  bool get_bit() {
    if (pos_ >= 8 * bytes_.size()) throw TruncatedError("bit stream exhausted");
    const bool b = (bytes_[pos_ / 8] >> (pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }

  std::uint64_t get_bits(unsigned width) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(get_bit()) << i;
    return v;
  }

  std::uint8_t get_byte() { return static_cast<std::uint8_t>(get_bits(8)); }

  std::uint64_t consumed() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return 8 * bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

/// LEB128 varint inside a bit stream: 8-bit groups, 7 payload bits each.
inline unsigned put_varint(BitWriter& w, std::uint64_t v) {
  unsigned groups = 0;
  do {
    std::uint8_t group = v & 0x7f;
    v >>= 7;
    if (v != 0) group |= 0x80;
    w.put_byte(group);
    ++groups;
  } while (v != 0);
  return groups;
}

inline std::uint64_t get_varint(BitReader& r) {
  std::uint64_t v = 0;
  for (unsigned shift = 0; shift < 64; shift += 7) {
    const std::uint8_t group = r.get_byte();
    v |= static_cast<std::uint64_t>(group & 0x7f) << shift;
    if ((group & 0x80) == 0) return v;
  }
  throw CorruptPayloadError("varint exceeds 64 bits");
}

/// Little-endian byte stream writer for fixed-width container fields.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
  void put_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bits);
  }
  void put_bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  void put_le(std::uint64_t v, unsigned n) {
    for (unsigned i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte stream reader; throws TruncatedError on short reads.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) noexcept : bytes_(bytes) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  float get_f32() {
    const std::uint32_t bits = get_u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double get_f64() {
    const std::uint64_t bits = get_u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    if (remaining() < n) throw TruncatedError("byte stream exhausted");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t consumed() const noexcept { return pos_; }

 private:
  std::uint64_t get_le(unsigned n) {
    if (remaining() < n) throw TruncatedError("byte stream exhausted");
    std::uint64_t v = 0;
    for (unsigned i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace gradpack
