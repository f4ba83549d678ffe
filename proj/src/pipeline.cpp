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

#include "gradpack/pipeline.hpp"

#include <algorithm>

#include "gradpack/rng.hpp"

namespace gradpack {

std::uint64_t derive_filter_seed_a(std::uint64_t seed) { return hash64(0xA, seed); }
std::uint64_t derive_filter_seed_b(std::uint64_t seed) { return hash64(0xB, seed); }
std::uint64_t derive_selection_seed(std::uint64_t seed_a, std::uint64_t seed_b) {
  return hash64(seed_a, seed_b);
}
std::uint64_t derive_quant_seed(std::uint64_t seed) { return hash64(0xC, seed); }

namespace {

bool is_bloom(IndexMethod m) {
  return m == IndexMethod::BloomP0 || m == IndexMethod::BloomP1 ||
         m == IndexMethod::BloomP2 || m == IndexMethod::BloomPd ||
         m == IndexMethod::BloomNaive;
}

// Values over `indices`: from the dense gradient when provided, else from the
// sparse gradient with zeros off its support.
Vector gather_values(const SparseGradient& sg, const Vector* dense,
                     std::span<const std::uint32_t> indices) {
  Vector out(static_cast<Index>(indices.size()));
  if (dense != nullptr) {
    for (std::size_t i = 0; i < indices.size(); ++i)
      out(static_cast<Index>(i)) = (*dense)(static_cast<Index>(indices[i]));
    return out;
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto it = std::lower_bound(sg.support.begin(), sg.support.end(), indices[i]);
    out(static_cast<Index>(i)) =
        (it != sg.support.end() && *it == indices[i])
            ? sg.values(static_cast<Index>(it - sg.support.begin()))
            : 0.0;
  }
  return out;
}

std::vector<std::uint8_t> encode_values(const Vector& values, const PipelineConfig& config,
                                        std::vector<std::uint8_t>& reorder_payload,
                                        Index d) {
  switch (config.value_method) {
    case ValueMethod::None: {
      ByteWriter w;
      for (Index i = 0; i < values.size(); ++i) w.put_f32(static_cast<float>(values(i)));
      return std::move(w).take();
    }
    case ValueMethod::RawF64: {
      ByteWriter w;
      for (Index i = 0; i < values.size(); ++i) w.put_f64(values(i));
      return std::move(w).take();
    }
    case ValueMethod::FitPoly:
    case ValueMethod::FitDexp: {
      ValueCodecConfig vc;
      vc.kind = config.value_method == ValueMethod::FitDexp ? FitKind::DoubleExp
                                                            : FitKind::PiecewisePoly;
      vc.degree = config.degree;
      vc.max_segments = config.max_segments;
      const CompressedValues cv = value_compress(values, vc);
      if (!cv.reorder.empty()) reorder_payload = reorder_encode(cv.reorder, d);
      return serialize_fit(cv.model);
    }
    case ValueMethod::Quant: {
      CounterRng rng(derive_quant_seed(config.seed));
      return serialize_quant(quantize(values, config.quant_bits, config.quant_bucket, rng));
    }
    case ValueMethod::DeflateSlot: {
      ByteWriter w;
      for (Index i = 0; i < values.size(); ++i) w.put_f32(static_cast<float>(values(i)));
      const std::vector<std::uint8_t> raw = std::move(w).take();
      return byte_compress(raw, config.slot_codec);
    }
  }
  throw Error("pipeline: unregistered value method");
}

Vector decode_values(const Container& c, std::uint64_t count) {
  switch (c.value_method) {
    case ValueMethod::None: {
      if (c.value_payload.size() != 4 * count)
        throw CorruptPayloadError("pipeline: raw f32 payload length mismatch");
      ByteReader r(c.value_payload);
      Vector out(static_cast<Index>(count));
      for (std::uint64_t i = 0; i < count; ++i)
        out(static_cast<Index>(i)) = static_cast<double>(r.get_f32());
      return out;
    }
    case ValueMethod::RawF64: {
      if (c.value_payload.size() != 8 * count)
        throw CorruptPayloadError("pipeline: raw f64 payload length mismatch");
      ByteReader r(c.value_payload);
      Vector out(static_cast<Index>(count));
      for (std::uint64_t i = 0; i < count; ++i) out(static_cast<Index>(i)) = r.get_f64();
      return out;
    }
    case ValueMethod::FitPoly:
    case ValueMethod::FitDexp: {
      ByteReader r(c.value_payload);
      const FitModel model = parse_fit(r, count);
      if (r.remaining() != 0) throw CorruptPayloadError("pipeline: fit payload trailing bytes");
      std::vector<std::uint32_t> reorder;
      if (!c.reorder_payload.empty())
        reorder = reorder_decode(c.reorder_payload, count, static_cast<Index>(c.d));
      return value_decompress(model, reorder, count);
    }
    case ValueMethod::Quant: {
      ByteReader r(c.value_payload);
      const QuantizedValues q = parse_quant(r, count);
      if (r.remaining() != 0) throw CorruptPayloadError("pipeline: quant payload trailing bytes");
      return dequantize(q);
    }
    case ValueMethod::DeflateSlot: {
      const std::vector<std::uint8_t> raw = byte_decompress(c.value_payload);
      if (raw.size() != 4 * count)
        throw CorruptPayloadError("pipeline: deflate slot length mismatch");
      ByteReader r(raw);
      Vector out(static_cast<Index>(count));
      for (std::uint64_t i = 0; i < count; ++i)
        out(static_cast<Index>(i)) = static_cast<double>(r.get_f32());
      return out;
    }
  }
  throw UnknownMethodError("pipeline: unregistered value method");
}

}  // namespace

Container compress_gradient(const SparseGradient& sg, const PipelineConfig& config,
                            const Vector* dense) {
  validate(sg);
  if (dense != nullptr && dense->size() != sg.dim)
    throw Error("pipeline: dense gradient dimension mismatch");
  const Index d = sg.dim;
  const Index r = sg.count();
  if (r < 1 && config.index_method != IndexMethod::None)
    throw Error("pipeline: empty support requires the raw index method");

  Container c;
  c.d = static_cast<std::uint64_t>(d);
  c.r = static_cast<std::uint64_t>(r);
  c.index_method = config.index_method;
  c.value_method = config.value_method;

  Vector values;
  switch (config.index_method) {
    case IndexMethod::None: {
      ByteWriter w;
      for (const std::uint32_t i : sg.support) w.put_u32(i);
      c.index_payload = std::move(w).take();
      values = sg.values;
      break;
    }
    case IndexMethod::Bitmap:
      c.index_payload = bitmap_to_bytes(to_bitmap(sg));
      values = sg.values;
      break;
    case IndexMethod::Rle:
      c.index_payload = rle_encode(to_bitmap(sg)).bytes;
      values = sg.values;
      break;
    case IndexMethod::Huffman: {
      const HuffmanCodec codec = HuffmanCodec::for_index_bytes(c.d);
      c.index_payload = codec.encode_indices(sg.support, c.d).bytes;
      values = sg.values;
      break;
    }
    case IndexMethod::BloomP0:
    case IndexMethod::BloomP1:
    case IndexMethod::BloomP2:
    case IndexMethod::BloomPd:
    case IndexMethod::BloomNaive: {
      const std::uint64_t seed_a = derive_filter_seed_a(config.seed);
      const std::uint64_t seed_b = derive_filter_seed_b(config.seed);
      const BloomFilter bf = build_filter(sg.support, config.fpr, seed_a, seed_b);
      c.index_payload = bf.serialize();
      if (config.index_method == IndexMethod::BloomNaive) {
        values = sg.values;  // support-order values; decode realigns by scan
        break;
      }
      const std::vector<std::uint32_t> positives = positive_scan(bf, d);
      if (config.index_method == IndexMethod::BloomP0) {
        values = gather_values(sg, dense, positives);
      } else if (config.index_method == IndexMethod::BloomPd) {
        c.index_payload.push_back(static_cast<std::uint8_t>(config.pd_variant));
        values = gather_values(sg, dense, pd_select(positives, r, config.pd_variant));
      } else {
        CounterRng rng(derive_selection_seed(seed_a, seed_b));
        const std::vector<std::uint32_t> selected =
            config.index_method == IndexMethod::BloomP1 ? p1_select(positives, r, rng)
                                                        : p2_select(positives, bf, r, rng);
        values = gather_values(sg, dense, selected);
      }
      break;
    }
  }

  if (values.size() == 0 &&
      (config.value_method == ValueMethod::FitPoly ||
       config.value_method == ValueMethod::FitDexp || config.value_method == ValueMethod::Quant))
    throw Error("pipeline: fit/quant value methods need a nonempty value sequence");
  c.value_payload = encode_values(values, config, c.reorder_payload, d);
  return c;
}

SparseGradient decompress_gradient(const Container& c) {
  if (c.d < 1) throw CorruptPayloadError("pipeline: d must be >= 1");
  if (c.d > 0xffffffffULL) throw CorruptPayloadError("pipeline: d exceeds index space");
  const Index d = static_cast<Index>(c.d);

  SparseGradient out;
  out.dim = d;

  switch (c.index_method) {
    case IndexMethod::None: {
      if (c.index_payload.size() != 4 * c.r)
        throw CorruptPayloadError("pipeline: raw key payload length mismatch");
      ByteReader r(c.index_payload);
      out.support.reserve(c.r);
      for (std::uint64_t i = 0; i < c.r; ++i) out.support.push_back(r.get_u32());
      break;
    }
    case IndexMethod::Bitmap: {
      const IndexBitmap b = bitmap_from_bytes(c.index_payload, d);
      if (static_cast<std::uint64_t>(b.popcount()) != c.r)
        throw CorruptPayloadError("pipeline: bitmap popcount != r");
      out.support = bitmap_support(b);
      break;
    }
    case IndexMethod::Rle: {
      const IndexBitmap b = rle_decode(c.index_payload, d);
      if (static_cast<std::uint64_t>(b.popcount()) != c.r)
        throw CorruptPayloadError("pipeline: rle popcount != r");
      out.support = bitmap_support(b);
      break;
    }
    case IndexMethod::Huffman: {
      const HuffmanCodec codec = HuffmanCodec::for_index_bytes(c.d);
      out.support = codec.decode_indices(c.index_payload, c.r, c.d);
      break;
    }
    case IndexMethod::BloomP0:
    case IndexMethod::BloomP1:
    case IndexMethod::BloomP2:
    case IndexMethod::BloomPd:
    case IndexMethod::BloomNaive: {
      ByteReader reader(c.index_payload);
      const BloomFilter bf = BloomFilter::deserialize(reader);
      PdVariant variant = PdVariant::Leftmost;
      if (c.index_method == IndexMethod::BloomPd) {
        const std::uint8_t v = reader.get_u8();
        if (v > 2) throw CorruptPayloadError("pipeline: unknown deterministic variant");
        variant = static_cast<PdVariant>(v);
      }
      if (reader.remaining() != 0)
        throw CorruptPayloadError("pipeline: bloom payload trailing bytes");

      if (c.index_method == IndexMethod::BloomNaive) {
        const Vector v = decode_values(c, c.r);
        return naive_reconstruct(bf, v, d);
      }

      const std::vector<std::uint32_t> positives = positive_scan(bf, d);
      if (c.index_method == IndexMethod::BloomP0) {
        out.support = positives;
      } else {
        if (positives.size() < c.r)
          throw CorruptPayloadError("pipeline: positive set smaller than r");
        CounterRng rng(derive_selection_seed(bf.seed_a(), bf.seed_b()));
        if (c.index_method == IndexMethod::BloomP1)
          out.support = p1_select(positives, static_cast<Index>(c.r), rng);
        else if (c.index_method == IndexMethod::BloomP2)
          out.support = p2_select(positives, bf, static_cast<Index>(c.r), rng);
        else
          out.support = pd_select(positives, static_cast<Index>(c.r), variant);
      }
      out.values = decode_values(c, out.support.size());
      return out;
    }
  }

  out.values = decode_values(c, c.r);
  try {
    validate(out);
  } catch (const Error& e) {
    throw CorruptPayloadError(e.what());  // e.g. unsorted raw keys
  }
  return out;
}

}  // namespace gradpack
