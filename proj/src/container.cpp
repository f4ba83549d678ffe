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

#include "gradpack/container.hpp"

#include <array>
#include <cstring>

#include "gradpack/bitio.hpp"
#include "gradpack/bloom.hpp"
#include "gradpack/codecs.hpp"
#include "gradpack/curvefit.hpp"

namespace gradpack {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'D', 'R', 'C', '1'};
constexpr std::uint16_t kVersion = 1;

constexpr std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t crc = i;
    for (int j = 0; j < 8; ++j) crc = (crc >> 1) ^ ((crc & 1u) ? 0x82F63B78u : 0u);
    table[i] = crc;
  }
  return table;
}

constexpr std::array<std::uint32_t, 256> kCrcTable = make_crc_table();

}  // namespace

std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (const std::uint8_t b : data) crc = (crc >> 8) ^ kCrcTable[(crc ^ b) & 0xFFu];
  return crc ^ 0xFFFFFFFFu;
}

bool index_method_known(std::uint8_t id) noexcept {
  return id <= static_cast<std::uint8_t>(IndexMethod::BloomNaive);
}

bool value_method_known(std::uint8_t id) noexcept {
  return id <= static_cast<std::uint8_t>(ValueMethod::RawF64);
}

std::vector<std::uint8_t> pack(const Container& c) {
  if (!index_method_known(static_cast<std::uint8_t>(c.index_method)))
    throw Error("container: unregistered index method");
  if (!value_method_known(static_cast<std::uint8_t>(c.value_method)))
    throw Error("container: unregistered value method");
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u16(c.version);
  w.put_u8(static_cast<std::uint8_t>(c.index_method));
  w.put_u8(static_cast<std::uint8_t>(c.value_method));
  w.put_u8(c.reorder_payload.empty() ? 0u : 1u);
  w.put_u64(c.d);
  w.put_u64(c.r);
  w.put_u64(c.index_payload.size());
  w.put_u64(c.value_payload.size());
  w.put_u64(c.reorder_payload.size());
  w.put_bytes(c.index_payload);
  w.put_bytes(c.value_payload);
  w.put_bytes(c.reorder_payload);
  std::uint32_t crc = 0xFFFFFFFFu;
  for (const auto* p : {&c.index_payload, &c.value_payload, &c.reorder_payload})
    for (const std::uint8_t b : *p) crc = (crc >> 8) ^ kCrcTable[(crc ^ b) & 0xFFu];
  w.put_u32(crc ^ 0xFFFFFFFFu);
  return std::move(w).take();
}

Container unpack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) throw TruncatedError("container: shorter than magic");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw CorruptPayloadError("container: bad magic");
  ByteReader r(bytes.subspan(kMagic.size()));
  const std::uint16_t version = r.get_u16();
  if (version != kVersion) throw DecodeError("container: unsupported version");
  const std::uint8_t index_id = r.get_u8();
  const std::uint8_t value_id = r.get_u8();
  const std::uint8_t flags = r.get_u8();
  Container c;
  c.version = version;
  c.d = r.get_u64();
  c.r = r.get_u64();
  const std::uint64_t index_len = r.get_u64();
  const std::uint64_t value_len = r.get_u64();
  const std::uint64_t reorder_len = r.get_u64();
  const std::uint64_t body = index_len + value_len + reorder_len + 4;
  if (r.remaining() < body) throw TruncatedError("container: payloads truncated");
  if (r.remaining() > body) throw CorruptPayloadError("container: trailing garbage");
  const auto index_span = r.get_bytes(index_len);
  const auto value_span = r.get_bytes(value_len);
  const auto reorder_span = r.get_bytes(reorder_len);
  const std::uint32_t stored_crc = r.get_u32();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (const auto& span : {index_span, value_span, reorder_span})
    for (const std::uint8_t b : span) crc = (crc >> 8) ^ kCrcTable[(crc ^ b) & 0xFFu];
  if ((crc ^ 0xFFFFFFFFu) != stored_crc) throw ChecksumError("container: checksum mismatch");
  if (!index_method_known(index_id)) throw UnknownMethodError("container: unknown index method");
  if (!value_method_known(value_id)) throw UnknownMethodError("container: unknown value method");
  c.index_method = static_cast<IndexMethod>(index_id);
  c.value_method = static_cast<ValueMethod>(value_id);
  if ((flags & ~1u) != 0) throw CorruptPayloadError("container: unknown flag bits");
  if (((flags & 1u) != 0) != (reorder_len > 0))
    throw CorruptPayloadError("container: reorder flag inconsistent with payload");
  if (reorder_len > 0 && c.value_method != ValueMethod::FitPoly &&
      c.value_method != ValueMethod::FitDexp)
    throw CorruptPayloadError("container: reorder payload without a fit value method");
  if (c.r > c.d) throw CorruptPayloadError("container: r exceeds d");
  c.index_payload.assign(index_span.begin(), index_span.end());
  c.value_payload.assign(value_span.begin(), value_span.end());
  c.reorder_payload.assign(reorder_span.begin(), reorder_span.end());
  return c;
}

namespace {

// Minimal structural walk of a fit payload: (coefficient count, value count).
std::pair<std::uint64_t, std::uint64_t> fit_shape(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::uint8_t kind = r.get_u8();
  if (kind > 1) throw UnknownMethodError("fit: unknown model kind");
  const std::uint16_t segs = r.get_u16();
  if (segs < 1) throw CorruptPayloadError("fit: zero segments");
  std::uint32_t last = 0;
  for (std::uint16_t i = 0; i < segs; ++i) last = r.get_u32();
  const std::uint8_t degree = r.get_u8();
  const std::uint64_t ncoeff =
      static_cast<std::uint64_t>(segs) * (kind == 1 ? 4u : degree + 1u);
  return {ncoeff, last};
}

}  // namespace

VolumeReport volume(const Container& c) {
  VolumeReport v;
  constexpr std::uint64_t kHeaderBytes = 4 + 2 + 1 + 1 + 1 + 8 + 8 + 8 + 8 + 8;
  v.total_bits =
      8 * (kHeaderBytes + c.index_payload.size() + c.value_payload.size() +
           c.reorder_payload.size() + 4);

  switch (c.index_method) {
    case IndexMethod::None:
      if (c.index_payload.size() != 4 * c.r)
        throw CorruptPayloadError("container: raw key payload length mismatch");
      v.index_bits = 32 * c.r;
      break;
    case IndexMethod::Bitmap:
      if (c.index_payload.size() != (c.d + 7) / 8)
        throw CorruptPayloadError("container: bitmap payload length mismatch");
      v.index_bits = c.d;
      break;
    case IndexMethod::Rle:
      if (c.index_payload.empty()) throw CorruptPayloadError("container: empty rle payload");
      // 1 lead bit plus whole varint byte groups; the writer pads < 8 bits.
      v.index_bits = 8 * c.index_payload.size() - 7;
      break;
    case IndexMethod::Huffman: {
      const HuffmanCodec codec = HuffmanCodec::for_index_bytes(c.d);
      const std::vector<std::uint8_t> syms = codec.decode(c.index_payload, 4 * c.r);
      std::uint64_t bits = 0;
      for (const std::uint8_t s : syms) bits += codec.code_length(s);
      v.index_bits = bits;
      break;
    }
    case IndexMethod::BloomP0:
    case IndexMethod::BloomP1:
    case IndexMethod::BloomP2:
    case IndexMethod::BloomPd:
    case IndexMethod::BloomNaive: {
      ByteReader r(c.index_payload);
      v.index_bits = r.get_u64();  // m, the filter width
      break;
    }
  }

  std::uint64_t value_count = c.r;
  switch (c.value_method) {
    case ValueMethod::None:
      if (c.value_payload.size() % 4 != 0)
        throw CorruptPayloadError("container: raw f32 payload length mismatch");
      value_count = c.value_payload.size() / 4;
      v.value_bits = 8 * c.value_payload.size();
      break;
    case ValueMethod::RawF64:
      if (c.value_payload.size() % 8 != 0)
        throw CorruptPayloadError("container: raw f64 payload length mismatch");
      value_count = c.value_payload.size() / 8;
      v.value_bits = 8 * c.value_payload.size();
      break;
    case ValueMethod::FitPoly:
    case ValueMethod::FitDexp: {
      const auto [ncoeff, count] = fit_shape(c.value_payload);
      value_count = count;
      v.value_bits = 32 * ncoeff;
      break;
    }
    case ValueMethod::Quant: {
      if (c.index_method == IndexMethod::BloomP0) {
        ByteReader br(c.index_payload);
        const BloomFilter bf = BloomFilter::deserialize(br);
        value_count = positive_scan(bf, static_cast<Index>(c.d)).size();
      }
      ByteReader r(c.value_payload);
      const std::uint8_t bits = r.get_u8();
      const std::uint32_t bucket = r.get_u32();
      if (bits < 1 || bucket < 1) throw CorruptPayloadError("container: bad quant header");
      const std::uint64_t nb = (value_count + bucket - 1) / bucket;
      v.value_bits = 32 * nb + static_cast<std::uint64_t>(bits) * value_count;
      break;
    }
    case ValueMethod::DeflateSlot:
      if (c.value_payload.size() < 9)
        throw CorruptPayloadError("container: deflate slot payload too short");
      v.value_bits = 8 * (c.value_payload.size() - 9);
      break;
  }

  if (!c.reorder_payload.empty()) {
    const unsigned width = reorder_entry_bits(static_cast<Index>(c.d));
    v.reorder_bits = value_count * width;
    if (c.reorder_payload.size() != (v.reorder_bits + 7) / 8)
      throw CorruptPayloadError("container: reorder payload length mismatch");
  }

  v.metadata_bits = v.total_bits - v.index_bits - v.value_bits - v.reorder_bits;
  if (c.d > 0) v.ratio_dense = static_cast<double>(v.total_bits) / (32.0 * static_cast<double>(c.d));
  if (c.r > 0) v.ratio_sparse = static_cast<double>(v.total_bits) / (64.0 * static_cast<double>(c.r));
  return v;
}

}  // namespace gradpack
