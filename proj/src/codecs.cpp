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

#include "gradpack/codecs.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <zlib.h>

namespace gradpack {

std::vector<std::pair<std::uint64_t, std::uint8_t>> byte_runs(std::span<const std::uint8_t> s) {
  std::vector<std::pair<std::uint64_t, std::uint8_t>> runs;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    runs.emplace_back(j - i, s[i]);
    i = j;
  }
  return runs;
}

RlePayload rle_encode(const IndexBitmap& b) {
  if (b.dim < 1) throw Error("rle_encode: empty bitmap");
  BitWriter w;
  w.put_bit(b.test(0));
  Index i = 0;
  while (i < b.dim) {
    const bool cur = b.test(i);
    Index j = i;
    while (j < b.dim && b.test(j) == cur) ++j;
    put_varint(w, static_cast<std::uint64_t>(j - i));
    i = j;
  }
  RlePayload out;
  out.bits = w.bit_count();
  out.bytes = std::move(w).take();
  return out;
}

IndexBitmap rle_decode(std::span<const std::uint8_t> payload, Index d) {
  if (d < 1) throw Error("rle_decode: d must be >= 1");
  BitReader r(payload);
  bool cur = r.get_bit();
  IndexBitmap b(d);
  Index pos = 0;
  while (pos < d) {
    const std::uint64_t run = get_varint(r);
    if (run == 0) throw CorruptPayloadError("rle: zero-length run");
    if (run > static_cast<std::uint64_t>(d - pos)) throw CorruptPayloadError("rle: runs exceed d");
    if (cur)
      for (Index i = pos; i < pos + static_cast<Index>(run); ++i) b.set(i);
    pos += static_cast<Index>(run);
    cur = !cur;
  }
  if (r.remaining() >= 8 || r.get_bits(static_cast<unsigned>(r.remaining())) != 0)
    throw CorruptPayloadError("rle: trailing garbage");
  return b;
}

std::array<std::uint64_t, 256> index_byte_frequencies(std::uint64_t d) {
  if (d < 1) throw Error("index_byte_frequencies: d must be >= 1");
  if (d > 0x100000000ULL) throw Error("index_byte_frequencies: d exceeds 32-bit index space");
  std::array<std::uint64_t, 256> freq{};
  for (unsigned j = 0; j < 4; ++j) {
    const std::uint64_t width = 1ULL << (8 * j);
    const std::uint64_t high = d >> (8 * (j + 1));
    const std::uint64_t mid = (d >> (8 * j)) & 0xff;
    const std::uint64_t low = d & (width - 1);
    for (unsigned b = 0; b < 256; ++b) {
      std::uint64_t n = high * width;
      if (b < mid)
        n += width;
      else if (b == mid)
        n += low;
      freq[b] += n;
    }
  }
  return freq;
}

HuffmanCodec HuffmanCodec::from_frequencies(const std::array<std::uint64_t, 256>& freq) {
  struct Node {
    std::uint64_t weight;
    std::uint32_t order;  // creation index; ties resolve deterministically
    int left, right;      // -1 for leaves
    int symbol;
  };
  std::vector<Node> nodes;
  using Entry = std::pair<std::uint64_t, std::uint32_t>;  // (weight, node id)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (int s = 0; s < 256; ++s) {
    if (freq[static_cast<std::size_t>(s)] == 0) continue;
    nodes.push_back({freq[static_cast<std::size_t>(s)], static_cast<std::uint32_t>(nodes.size()), -1, -1, s});
    heap.emplace(nodes.back().weight, nodes.back().order);
  }
  if (nodes.empty()) throw Error("huffman: empty alphabet");

  HuffmanCodec c;
  if (nodes.size() == 1) {
    c.lengths_[static_cast<std::size_t>(nodes[0].symbol)] = 1;
  } else {
    while (heap.size() > 1) {
      const auto [wa, a] = heap.top();
      heap.pop();
      const auto [wb, bid] = heap.top();
      heap.pop();
      nodes.push_back({wa + wb, static_cast<std::uint32_t>(nodes.size()), static_cast<int>(a),
                       static_cast<int>(bid), -1});
      heap.emplace(wa + wb, nodes.back().order);
    }
    // depth-first length assignment from the root
    std::vector<std::pair<int, unsigned>> stack{{static_cast<int>(nodes.size()) - 1, 0}};
    while (!stack.empty()) {
      const auto [id, depth] = stack.back();
      stack.pop_back();
      const Node& n = nodes[static_cast<std::size_t>(id)];
      if (n.symbol >= 0) {
        if (depth > 57) throw Error("huffman: code length exceeds 57 bits");
        c.lengths_[static_cast<std::size_t>(n.symbol)] = static_cast<std::uint8_t>(depth);
      } else {
        stack.emplace_back(n.left, depth + 1);
        stack.emplace_back(n.right, depth + 1);
      }
    }
  }

  // canonical codes: symbols ordered by (length, symbol)
  for (int s = 0; s < 256; ++s)
    if (c.lengths_[static_cast<std::size_t>(s)] > 0) c.sorted_syms_.push_back(static_cast<std::uint8_t>(s));
  std::sort(c.sorted_syms_.begin(), c.sorted_syms_.end(), [&c](std::uint8_t a, std::uint8_t b) {
    if (c.lengths_[a] != c.lengths_[b]) return c.lengths_[a] < c.lengths_[b];
    return a < b;
  });
  c.max_len_ = c.lengths_[c.sorted_syms_.back()];
  std::uint64_t code = 0;
  unsigned prev_len = c.lengths_[c.sorted_syms_.front()];
  code = 0;
  for (std::size_t i = 0; i < c.sorted_syms_.size(); ++i) {
    const std::uint8_t sym = c.sorted_syms_[i];
    const unsigned len = c.lengths_[sym];
    if (i > 0) {
      code = (code + 1) << (len - prev_len);
    } else {
      code = 0;
    }
    c.codes_[sym] = code;
    prev_len = len;
  }
  // canonical decode tables
  for (unsigned len = 1; len <= c.max_len_; ++len) {
    c.first_index_[len] = 0;
    c.count_[len] = 0;
  }
  for (std::size_t i = 0; i < c.sorted_syms_.size(); ++i) {
    const unsigned len = c.lengths_[c.sorted_syms_[i]];
    if (c.count_[len] == 0) {
      c.first_index_[len] = static_cast<std::uint32_t>(i);
      c.first_code_[len] = c.codes_[c.sorted_syms_[i]];
    }
    ++c.count_[len];
  }
  return c;
}

HuffmanCodec HuffmanCodec::for_index_bytes(std::uint64_t d) {
  return from_frequencies(index_byte_frequencies(d));
}

void HuffmanCodec::encode_symbol(BitWriter& w, std::uint8_t sym) const {
  const unsigned len = lengths_[sym];
  if (len == 0) throw Error("huffman: symbol absent from codec");
  const std::uint64_t code = codes_[sym];
  for (unsigned i = len; i-- > 0;) w.put_bit((code >> i) & 1u);  // MSB first
}

std::uint8_t HuffmanCodec::decode_symbol(BitReader& r) const {
  std::uint64_t code = 0;
  for (unsigned len = 1; len <= max_len_; ++len) {
    code = (code << 1) | static_cast<std::uint64_t>(r.get_bit());
    if (count_[len] != 0 && code >= first_code_[len] &&
        code - first_code_[len] < count_[len])
      return sorted_syms_[first_index_[len] + static_cast<std::uint32_t>(code - first_code_[len])];
  }
  throw CorruptPayloadError("huffman: invalid code");
}

HuffmanCodec::Encoded HuffmanCodec::encode(std::span<const std::uint8_t> symbols) const {
  BitWriter w;
  for (const std::uint8_t s : symbols) encode_symbol(w, s);
  Encoded out;
  out.bits = w.bit_count();
  out.bytes = std::move(w).take();
  return out;
}

std::vector<std::uint8_t> HuffmanCodec::decode(std::span<const std::uint8_t> payload,
                                               std::uint64_t symbol_count) const {
  BitReader r(payload);
  std::vector<std::uint8_t> out;
  out.reserve(symbol_count);
  for (std::uint64_t i = 0; i < symbol_count; ++i) out.push_back(decode_symbol(r));
  if (r.remaining() >= 8) throw CorruptPayloadError("huffman: trailing garbage");
  return out;
}

HuffmanCodec::Encoded HuffmanCodec::encode_indices(std::span<const std::uint32_t> indices,
                                                   std::uint64_t d) const {
  BitWriter w;
  for (const std::uint32_t idx : indices) {
    if (idx >= d) throw Error("huffman: index out of range");
    for (unsigned j = 0; j < 4; ++j) encode_symbol(w, static_cast<std::uint8_t>(idx >> (8 * j)));
  }
  Encoded out;
  out.bits = w.bit_count();
  out.bytes = std::move(w).take();
  return out;
}

std::vector<std::uint32_t> HuffmanCodec::decode_indices(std::span<const std::uint8_t> payload,
                                                        std::uint64_t count, std::uint64_t d) const {
  const std::vector<std::uint8_t> bytes = decode(payload, 4 * count);
  std::vector<std::uint32_t> out(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (unsigned j = 0; j < 4; ++j) v |= static_cast<std::uint32_t>(bytes[4 * i + j]) << (8 * j);
    if (v >= d) throw CorruptPayloadError("huffman: decoded index out of range");
    out[i] = v;
  }
  return out;
}

std::vector<std::uint8_t> byte_compress(std::span<const std::uint8_t> data, ByteCodec codec) {
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(codec));
  w.put_u64(data.size());
  switch (codec) {
    case ByteCodec::Store:
      w.put_bytes(data);
      break;
    case ByteCodec::Deflate: {
      uLongf bound = compressBound(static_cast<uLong>(data.size()));
      std::vector<std::uint8_t> buf(bound);
      const int rc = compress2(buf.data(), &bound, data.data(), static_cast<uLong>(data.size()),
                               Z_DEFAULT_COMPRESSION);
      if (rc != Z_OK) throw Error("deflate: compress failed");
      buf.resize(bound);
      w.put_bytes(buf);
      break;
    }
    default:
      throw UnknownMethodError("byte_compress: unknown codec id");
  }
  return std::move(w).take();
}

std::vector<std::uint8_t> byte_decompress(std::span<const std::uint8_t> framed) {
  ByteReader r(framed);
  const std::uint8_t id = r.get_u8();
  const std::uint64_t raw_len = r.get_u64();
  const auto body = r.get_bytes(r.remaining());
  switch (static_cast<ByteCodec>(id)) {
    case ByteCodec::Store: {
      if (body.size() != raw_len) throw CorruptPayloadError("store: length mismatch");
      return std::vector<std::uint8_t>(body.begin(), body.end());
    }
    case ByteCodec::Deflate: {
      std::vector<std::uint8_t> out(raw_len);
      uLongf out_len = static_cast<uLongf>(raw_len);
      const int rc = uncompress(out.data(), &out_len, body.data(), static_cast<uLong>(body.size()));
      if (rc != Z_OK || out_len != raw_len) throw CorruptPayloadError("deflate: stream corrupt");
      return out;
    }
    default:
      throw UnknownMethodError("byte_decompress: unknown codec id");
  }
}

QuantizedValues quantize(const Eigen::Ref<const Vector>& v, int bits, std::uint32_t bucket,
                         CounterRng& rng) {
  if (bits < 1 || bits > 16) throw Error("quantize: bits out of range [1, 16]");
  if (bucket < 1) throw Error("quantize: bucket must be >= 1");
  QuantizedValues q;
  q.bits = static_cast<std::uint8_t>(bits);
  q.bucket = bucket;
  q.count = static_cast<std::uint64_t>(v.size());
  const std::uint64_t levels = (1ULL << bits) - 1;
  const std::uint64_t nb = (q.count + bucket - 1) / bucket;
  q.scales.reserve(nb);
  BitWriter w;
  for (std::uint64_t b = 0; b < nb; ++b) {
    const Index begin = static_cast<Index>(b * bucket);
    const Index len = std::min<Index>(bucket, v.size() - begin);
    // The stored float32 scale is the one decode will use; quantize against it.
    const float scale = static_cast<float>(2.0 * v.segment(begin, len).cwiseAbs().maxCoeff());
    q.scales.push_back(scale);
    for (Index i = begin; i < begin + len; ++i) {
      std::uint64_t code = 0;
      if (scale > 0.0f) {
        // The float32 scale may round below 2*max, putting u a hair outside
        // [0, levels]; clamp before flooring.
        double u = (v(i) / static_cast<double>(scale) + 0.5) * static_cast<double>(levels);
        u = std::clamp(u, 0.0, static_cast<double>(levels));
        const double lo = std::floor(u);
        const double frac = u - lo;
        code = static_cast<std::uint64_t>(lo);
        if (rng.unit() < frac) ++code;
        if (code > levels) code = levels;  // guards u == levels exactly
      }
      w.put_bits(code, static_cast<unsigned>(bits));
    }
  }
  q.codes = std::move(w).take();
  return q;
}

Vector dequantize(const QuantizedValues& q) {
  if (q.bits < 1 || q.bits > 16) throw CorruptPayloadError("quant: bits out of range");
  if (q.bucket < 1) throw CorruptPayloadError("quant: bucket must be >= 1");
  const std::uint64_t levels = (1ULL << q.bits) - 1;
  const std::uint64_t nb = (q.count + q.bucket - 1) / q.bucket;
  if (q.scales.size() != nb) throw CorruptPayloadError("quant: scale count mismatch");
  Vector out(static_cast<Index>(q.count));
  BitReader r(q.codes);
  for (std::uint64_t i = 0; i < q.count; ++i) {
    const double scale = static_cast<double>(q.scales[i / q.bucket]);
    const std::uint64_t code = r.get_bits(q.bits);
    if (code > levels) throw CorruptPayloadError("quant: code out of range");
    out(static_cast<Index>(i)) =
        scale * (static_cast<double>(code) / static_cast<double>(levels) - 0.5);
  }
  return out;
}

std::vector<std::uint8_t> serialize_quant(const QuantizedValues& q) {
  ByteWriter w;
  w.put_u8(q.bits);
  w.put_u32(q.bucket);
  for (const float s : q.scales) w.put_f32(s);
  w.put_bytes(q.codes);
  return std::move(w).take();
}

QuantizedValues parse_quant(ByteReader& r, std::uint64_t count) {
  QuantizedValues q;
  q.bits = r.get_u8();
  if (q.bits < 1 || q.bits > 16) throw CorruptPayloadError("quant: bits out of range");
  q.bucket = r.get_u32();
  if (q.bucket < 1) throw CorruptPayloadError("quant: bucket must be >= 1");
  q.count = count;
  const std::uint64_t nb = (count + q.bucket - 1) / q.bucket;
  for (std::uint64_t i = 0; i < nb; ++i) q.scales.push_back(r.get_f32());
  const std::uint64_t code_bytes = (count * q.bits + 7) / 8;
  const auto body = r.get_bytes(code_bytes);
  q.codes.assign(body.begin(), body.end());
  return q;
}

}  // namespace gradpack
