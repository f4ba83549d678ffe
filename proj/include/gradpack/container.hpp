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
#include <span>
#include <vector>

#include "gradpack/errors.hpp"

namespace gradpack {

/// Stable wire ids. New methods append; ids are never reused.
enum class IndexMethod : std::uint8_t {
  None = 0,      ///< raw support keys, u32 LE each
  Bitmap = 1,    ///< d bits, LSB-first
  Rle = 2,       ///< bit-level run-length coded bitmap
  Huffman = 3,   ///< canonical Huffman over index bytes, rebuilt from d
  BloomP0 = 4,   ///< Bloom filter; values cover the whole positive set
  BloomP1 = 5,   ///< Bloom filter; r positives selected uniformly
  BloomP2 = 6,   ///< Bloom filter; r positives selected by conflict sets
  BloomPd = 7,   ///< Bloom filter; deterministic slice (variant byte appended)
  BloomNaive = 8 ///< Bloom filter; pointer-scan assignment (misalignment demo)
};

enum class ValueMethod : std::uint8_t {
  None = 0,        ///< raw values, f32 LE each
  FitPoly = 1,     ///< piecewise-polynomial fit payload
  FitDexp = 2,     ///< double-exponential fit payload (may fall back to poly)
  Quant = 3,       ///< b-bit stochastic quantizer payload
  DeflateSlot = 4, ///< raw f32 values through the byte-compressor slot
  RawF64 = 5       ///< raw values, f64 LE each (reference trajectories)
};

bool index_method_known(std::uint8_t id) noexcept;
bool value_method_known(std::uint8_t id) noexcept;

/// Versioned envelope: magic "DRC1", version u16, index/value method u8s,
/// flags u8 (bit0 = reorder payload present), d u64, r u64, three payload
/// lengths u64, the payloads, then CRC-32C (u32 LE) over the concatenated
/// payloads. All integers little-endian. Full layout in FORMAT.md.
struct Container {
  std::uint16_t version = 1;
  IndexMethod index_method = IndexMethod::None;
  ValueMethod value_method = ValueMethod::None;
  std::uint64_t d = 0;
  std::uint64_t r = 0;
  std::vector<std::uint8_t> index_payload;
  std::vector<std::uint8_t> value_payload;
  std::vector<std::uint8_t> reorder_payload;

  bool operator==(const Container&) const = default;
};

std::vector<std::uint8_t> pack(const Container& c);
Container unpack(std::span<const std::uint8_t> bytes);

/// CRC-32C (Castagnoli), reflected, init/xorout 0xFFFFFFFF.
/// crc32c("123456789") = 0xE3069283.
std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept;

/// Exact integer bit decomposition of a packed container. Data bits count
/// the information-bearing payload content per method (e.g. the m filter
/// bits, fit coefficients at 32 bits each); framing, padding and the fixed
/// header are metadata. Parts always sum to total.
struct VolumeReport {
  std::uint64_t index_bits = 0;
  std::uint64_t value_bits = 0;
  std::uint64_t reorder_bits = 0;
  std::uint64_t metadata_bits = 0;
  std::uint64_t total_bits = 0;
  double ratio_dense = 0.0;   ///< total / (32 d)
  double ratio_sparse = 0.0;  ///< total / (64 r); 0 when r = 0
};
VolumeReport volume(const Container& c);

}  // namespace gradpack
