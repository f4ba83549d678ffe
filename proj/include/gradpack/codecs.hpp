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

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gradpack/bitio.hpp"
#include "gradpack/gradient.hpp"
#include "gradpack/rng.hpp"

namespace gradpack {

/// (run length, symbol) tuples of a byte sequence, in order.
std::vector<std::pair<std::uint64_t, std::uint8_t>> byte_runs(std::span<const std::uint8_t> s);

/// Bit-level run-length coding of a bitmap: one bit for the initial value,
/// then one LEB128 varint per run. Runs sum to d exactly, so the payload is
/// exactly 1 + 8 * (varint byte groups) bits.
struct RlePayload {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bits = 0;
};
RlePayload rle_encode(const IndexBitmap& b);
IndexBitmap rle_decode(std::span<const std::uint8_t> payload, Index d);

/// Canonical Huffman over byte symbols. Codes are assigned by (length,
/// symbol), so a codec is fully determined by its frequency table and both
/// sides can rebuild it without transmitting the tree.
class HuffmanCodec {
 public:
  static HuffmanCodec from_frequencies(const std::array<std::uint64_t, 256>& freq);

  /// Codec for index streams over [0, d): frequencies are the byte
  /// distribution of all indices 0..d-1 serialized as 4 little-endian bytes,
  /// so the table is reproducible from d alone.
  static HuffmanCodec for_index_bytes(std::uint64_t d);

  /// 0 when the symbol has no code.
  unsigned code_length(std::uint8_t sym) const noexcept { return lengths_[sym]; }

  void encode_symbol(BitWriter& w, std::uint8_t sym) const;
  std::uint8_t decode_symbol(BitReader& r) const;

  struct Encoded {
    std::vector<std::uint8_t> bytes;
    std::uint64_t bits = 0;
  };
  Encoded encode(std::span<const std::uint8_t> symbols) const;
  std::vector<std::uint8_t> decode(std::span<const std::uint8_t> payload,
                                   std::uint64_t symbol_count) const;

  /// Indices serialize as 4 LE bytes each. decode_indices validates
  /// index < d and requires the payload to hold exactly 4 * count symbols.
  Encoded encode_indices(std::span<const std::uint32_t> indices, std::uint64_t d) const;
  std::vector<std::uint32_t> decode_indices(std::span<const std::uint8_t> payload,
                                            std::uint64_t count, std::uint64_t d) const;

 private:
  std::array<std::uint8_t, 256> lengths_{};
  std::array<std::uint64_t, 256> codes_{};  // MSB-first within each code
  // canonical decode tables
  std::vector<std::uint8_t> sorted_syms_;
  std::array<std::uint64_t, 65> first_code_{};
  std::array<std::uint32_t, 65> first_index_{};
  std::array<std::uint32_t, 65> count_{};
  unsigned max_len_ = 0;
};

/// Exact byte frequencies of the 4-byte LE serialization of 0..d-1.
std::array<std::uint64_t, 256> index_byte_frequencies(std::uint64_t d);

/// Pluggable lossless byte-compressor slot. Framing: codec id (u8),
/// uncompressed length (u64 LE), payload bytes.
enum class ByteCodec : std::uint8_t { Store = 0, Deflate = 1 };
std::vector<std::uint8_t> byte_compress(std::span<const std::uint8_t> data, ByteCodec codec);
std::vector<std::uint8_t> byte_decompress(std::span<const std::uint8_t> framed);

/// b-bit stochastic quantizer. Each bucket stores one float32 scale equal to
/// twice its max magnitude; codes map [-scale/2, scale/2] onto 2^b - 1 equal
/// steps with unbiased stochastic rounding, so the worst-case error is
/// scale / (2^b - 1) per bucket.
struct QuantizedValues {
  std::uint8_t bits = 0;
  std::uint32_t bucket = 0;
  std::uint64_t count = 0;
  std::vector<float> scales;          ///< one per bucket
  std::vector<std::uint8_t> codes;    ///< bit-packed, `bits` per value
};
QuantizedValues quantize(const Eigen::Ref<const Vector>& v, int bits, std::uint32_t bucket,
                         CounterRng& rng);
Vector dequantize(const QuantizedValues& q);

/// Payload layout: bits (u8), bucket (u32 LE), scales (f32 LE each), packed
/// codes. The value count comes from the enclosing container.
std::vector<std::uint8_t> serialize_quant(const QuantizedValues& q);
QuantizedValues parse_quant(ByteReader& r, std::uint64_t count);

}  // namespace gradpack
