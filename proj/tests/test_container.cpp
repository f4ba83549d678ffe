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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "gradpack/bloom.hpp"
#include "gradpack/codecs.hpp"
#include "gradpack/container.hpp"
#include "gradpack/curvefit.hpp"
#include "gradpack/errors.hpp"
#include "gradpack/pipeline.hpp"
#include "gradpack/rng.hpp"
#include "gradpack/tensor_file.hpp"

using namespace gradpack;

namespace {

SparseGradient make_sparse(Index dim, std::vector<std::uint32_t> support,
                           std::initializer_list<double> values) {
  SparseGradient sg;
  sg.dim = dim;
  sg.support = std::move(support);
  sg.values.resize(static_cast<Index>(values.size()));
  Index i = 0;
  for (const double v : values) sg.values(i++) = v;
  return sg;
}

// Deterministic containers frozen on disk; any byte drift is a format break.
struct GoldenRecipe {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

std::vector<GoldenRecipe> golden_recipes() {
  std::vector<GoldenRecipe> out;

  {
    const SparseGradient sg = make_sparse(4, {1, 3}, {1.5, -2.0});
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::None;
    cfg.value_method = ValueMethod::None;
    out.push_back({"raw_none.drc", pack(compress_gradient(sg, cfg))});
  }
  {
    const SparseGradient sg =
        make_sparse(16, {1, 3, 6, 7, 9, 12}, {4.0, 5.5, 4.5, 6.0, 5.0, 6.5});
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::Bitmap;
    cfg.value_method = ValueMethod::FitPoly;
    cfg.degree = 1;
    out.push_back({"bitmap_fitpoly_reorder.drc", pack(compress_gradient(sg, cfg))});
  }
  {
    SparseGradient sg;
    sg.dim = 128;
    sg.values.resize(40);
    for (Index i = 0; i < 40; ++i) {
      sg.support.push_back(static_cast<std::uint32_t>(40 + i));
      const double x = static_cast<double>(i + 1);
      sg.values(i) = 2.0 * std::exp(-0.05 * x) + 0.7 * std::exp(-0.5 * x);
    }
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::Rle;
    cfg.value_method = ValueMethod::FitDexp;
    out.push_back({"rle_fitdexp.drc", pack(compress_gradient(sg, cfg))});
  }
  {
    CounterRng rng(3030);
    std::vector<std::uint32_t> support;
    while (support.size() < 16) support.push_back(static_cast<std::uint32_t>(rng.below(256)));
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    SparseGradient sg;
    sg.dim = 256;
    sg.support = support;
    sg.values.resize(static_cast<Index>(support.size()));
    for (Index i = 0; i < sg.values.size(); ++i) sg.values(i) = rng.normal();
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::BloomP2;
    cfg.value_method = ValueMethod::Quant;
    cfg.fpr = 0.01;
    cfg.quant_bits = 7;
    cfg.seed = 99;
    out.push_back({"bloom_p2_quant.drc", pack(compress_gradient(sg, cfg))});
  }
  {
    CounterRng rng(4040);
    std::vector<std::uint32_t> support;
    while (support.size() < 50) support.push_back(static_cast<std::uint32_t>(rng.below(1000)));
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    SparseGradient sg;
    sg.dim = 1000;
    sg.support = support;
    sg.values.resize(static_cast<Index>(support.size()));
    for (Index i = 0; i < sg.values.size(); ++i) sg.values(i) = rng.normal();
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::Huffman;
    cfg.value_method = ValueMethod::DeflateSlot;
    cfg.slot_codec = ByteCodec::Store;  // keeps the bytes zlib-version-proof
    out.push_back({"huffman_storeslot.drc", pack(compress_gradient(sg, cfg))});
  }
  {
    const SparseGradient sg =
        make_sparse(64, {2, 9, 17, 30, 41, 50, 61, 63},
                    {8.0, 7.5, 7.0, 6.5, 6.0, 5.5, 5.0, 4.5});
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::BloomPd;
    cfg.value_method = ValueMethod::None;
    cfg.pd_variant = PdVariant::Middle;
    cfg.fpr = 0.05;
    cfg.seed = 7;
    out.push_back({"bloom_pd_none.drc", pack(compress_gradient(sg, cfg))});
  }
  return out;
}

std::vector<std::uint8_t> packed_fixture() {
  const SparseGradient sg = make_sparse(4, {1, 3}, {1.5, -2.0});
  PipelineConfig cfg;
  cfg.index_method = IndexMethod::None;
  cfg.value_method = ValueMethod::None;
  return pack(compress_gradient(sg, cfg));
}

}  // namespace

TEST_CASE("crc32c matches the published check value") {
  const std::string check = "123456789";
  CHECK(crc32c(std::vector<std::uint8_t>(check.begin(), check.end())) == 0xE3069283u);
  CHECK(crc32c({}) == 0u);
}

TEST_CASE("pack emits the documented byte layout") {
  const std::vector<std::uint8_t> bytes = packed_fixture();
  const std::vector<std::uint8_t> expect = {
      'D',  'R',  'C',  '1',                       // magic
      0x01, 0x00,                                  // version
      0x00,                                        // index method: raw keys
      0x00,                                        // value method: raw f32
      0x00,                                        // flags
      0x04, 0,    0,    0,    0, 0, 0, 0,          // d = 4
      0x02, 0,    0,    0,    0, 0, 0, 0,          // r = 2
      0x08, 0,    0,    0,    0, 0, 0, 0,          // index payload length
      0x08, 0,    0,    0,    0, 0, 0, 0,          // value payload length
      0x00, 0,    0,    0,    0, 0, 0, 0,          // reorder payload length
      0x01, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00,  // keys 1, 3
      0x00, 0x00, 0xC0, 0x3F, 0x00, 0x00, 0x00, 0xC0,  // 1.5f, -2.0f
      0xEC, 0xF0, 0xF4, 0xCB,                      // CRC-32C of the payloads
  };
  CHECK(bytes == expect);
}

TEST_CASE("unpack inverts pack for synthetic containers") {
  Container c;
  c.index_method = IndexMethod::Rle;
  c.value_method = ValueMethod::Quant;
  c.d = 1000;
  c.r = 30;
  c.index_payload = {1, 2, 3};
  c.value_payload = {4, 5};
  const Container back = unpack(pack(c));
  CHECK(back == c);

  Container empty;
  empty.d = 1;
  CHECK(unpack(pack(empty)) == empty);
}

TEST_CASE("pack rejects unregistered method ids") {
  Container c;
  c.d = 1;
  c.index_method = static_cast<IndexMethod>(9);
  CHECK_THROWS_AS(pack(c), Error);
  c.index_method = IndexMethod::None;
  c.value_method = static_cast<ValueMethod>(6);
  CHECK_THROWS_AS(pack(c), Error);
}

TEST_CASE("unpack rejects every truncation") {
  const std::vector<std::uint8_t> bytes = packed_fixture();
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(unpack(part), TruncatedError);
  }
}

TEST_CASE("unpack rejects header corruption with precise errors") {
  const std::vector<std::uint8_t> good = packed_fixture();
  auto mutate = [&](std::size_t at, std::uint8_t value) {
    std::vector<std::uint8_t> bad = good;
    bad.at(at) = value;
    return bad;
  };

  CHECK_THROWS_AS(unpack(mutate(0, 'X')), CorruptPayloadError);   // magic
  CHECK_THROWS_AS(unpack(mutate(4, 2)), DecodeError);             // version 2
  CHECK_THROWS_AS(unpack(mutate(6, 9)), UnknownMethodError);      // index id
  CHECK_THROWS_AS(unpack(mutate(7, 6)), UnknownMethodError);      // value id
  CHECK_THROWS_AS(unpack(mutate(8, 1)), CorruptPayloadError);     // reorder flag, no payload
  CHECK_THROWS_AS(unpack(mutate(8, 2)), CorruptPayloadError);     // unknown flag bit
  CHECK_THROWS_AS(unpack(mutate(17, 5)), CorruptPayloadError);    // r = 5 > d = 4

  std::vector<std::uint8_t> trailing = good;
  trailing.push_back(0x00);
  CHECK_THROWS_AS(unpack(trailing), CorruptPayloadError);
}

TEST_CASE("unpack detects payload corruption via the checksum") {
  const std::vector<std::uint8_t> good = packed_fixture();
  for (const std::size_t at : {49u, 53u, 57u, 64u}) {  // index and value payload bytes
    std::vector<std::uint8_t> bad = good;
    bad.at(at) ^= 0x40;
    CHECK_THROWS_AS(unpack(bad), ChecksumError);
  }
  std::vector<std::uint8_t> bad_crc = good;
  bad_crc.back() ^= 0x01;
  CHECK_THROWS_AS(unpack(bad_crc), ChecksumError);
}

TEST_CASE("unpack rejects a reorder payload on non-fit value methods") {
  ByteWriter w;
  const std::vector<std::uint8_t> index = {2, 0, 0, 0};
  const std::vector<std::uint8_t> value = {0, 0, 0, 0};
  const std::vector<std::uint8_t> reorder = {0};
  w.put_bytes(std::vector<std::uint8_t>{'D', 'R', 'C', '1'});
  w.put_u16(1);
  w.put_u8(0);  // raw keys
  w.put_u8(0);  // raw f32 values
  w.put_u8(1);  // reorder flag
  w.put_u64(4);
  w.put_u64(1);
  w.put_u64(index.size());
  w.put_u64(value.size());
  w.put_u64(reorder.size());
  w.put_bytes(index);
  w.put_bytes(value);
  w.put_bytes(reorder);
  std::vector<std::uint8_t> all = index;
  all.insert(all.end(), value.begin(), value.end());
  all.insert(all.end(), reorder.begin(), reorder.end());
  w.put_u32(crc32c(all));
  CHECK_THROWS_AS(unpack(w.bytes()), CorruptPayloadError);
}

TEST_CASE("plain index methods round trip values at f32 precision") {
  const SparseGradient sg = make_sparse(12, {2, 5, 9}, {0.5, -2.25, 3.0});
  for (const IndexMethod im :
       {IndexMethod::None, IndexMethod::Bitmap, IndexMethod::Rle, IndexMethod::Huffman}) {
    PipelineConfig cfg;
    cfg.index_method = im;
    cfg.value_method = ValueMethod::None;
    const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg))));
    CHECK(back.dim == sg.dim);
    CHECK(back.support == sg.support);
    REQUIRE(back.values.size() == sg.values.size());
    for (Index i = 0; i < back.values.size(); ++i) CHECK(back.values(i) == sg.values(i));
  }
}

TEST_CASE("raw f64 values survive exactly") {
  const SparseGradient sg = make_sparse(6, {0, 4}, {0.1, 1.0 / 3.0});
  PipelineConfig cfg;
  cfg.index_method = IndexMethod::Bitmap;
  cfg.value_method = ValueMethod::RawF64;
  const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg))));
  CHECK(back.values(0) == 0.1);
  CHECK(back.values(1) == 1.0 / 3.0);
}

TEST_CASE("empty support round trips through the raw index method") {
  SparseGradient sg;
  sg.dim = 5;
  PipelineConfig cfg;
  const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg))));
  CHECK(back.dim == 5);
  CHECK(back.count() == 0);

  PipelineConfig bitmap_cfg;
  bitmap_cfg.index_method = IndexMethod::Bitmap;
  CHECK_THROWS_AS(compress_gradient(sg, bitmap_cfg), Error);
}

TEST_CASE("bloom p0 carries dense values on the whole positive set") {
  CounterRng rng(555);
  const Index d = 500;
  Vector dense(d);
  for (Index i = 0; i < d; ++i) dense(i) = rng.normal();
  std::vector<std::uint32_t> support;
  while (support.size() < 25) support.push_back(static_cast<std::uint32_t>(rng.below(d)));
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  const SparseGradient sg = gather(dense, support);

  PipelineConfig cfg;
  cfg.index_method = IndexMethod::BloomP0;
  cfg.fpr = 0.05;
  cfg.seed = 21;
  const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg, &dense))));
  CHECK(std::includes(back.support.begin(), back.support.end(), sg.support.begin(),
                      sg.support.end()));
  for (Index i = 0; i < back.count(); ++i)
    CHECK(back.values(i) == static_cast<double>(static_cast<float>(dense(back.support[i]))));
}

TEST_CASE("bloom p0 without a dense source fills false positives with zeros") {
  const SparseGradient sg = make_sparse(200, {10, 50, 90, 130}, {1.0, -2.0, 3.0, -4.0});
  PipelineConfig cfg;
  cfg.index_method = IndexMethod::BloomP0;
  cfg.fpr = 0.2;
  cfg.seed = 4;
  const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg))));
  for (Index i = 0; i < back.count(); ++i) {
    const auto it = std::lower_bound(sg.support.begin(), sg.support.end(), back.support[i]);
    const bool member = it != sg.support.end() && *it == back.support[i];
    const double want = member ? sg.values(static_cast<Index>(it - sg.support.begin())) : 0.0;
    CHECK(back.values(i) == want);
  }
}

TEST_CASE("bloom selection policies agree between encoder and decoder") {
  CounterRng rng(777);
  const Index d = 2000;
  Vector dense(d);
  for (Index i = 0; i < d; ++i) dense(i) = rng.normal();
  std::vector<std::uint32_t> support;
  while (support.size() < 60) support.push_back(static_cast<std::uint32_t>(rng.below(d)));
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  const SparseGradient sg = gather(dense, support);
  const Index r = sg.count();

  for (const IndexMethod im : {IndexMethod::BloomP1, IndexMethod::BloomP2, IndexMethod::BloomPd}) {
    PipelineConfig cfg;
    cfg.index_method = im;
    cfg.fpr = 0.05;
    cfg.seed = 31;
    const std::vector<std::uint8_t> bytes = pack(compress_gradient(sg, cfg, &dense));
    const SparseGradient back = decompress_gradient(unpack(bytes));
    CHECK(back.count() == r);
    // Decoded values matching the dense source proves the decoder re-derived
    // the encoder's selection.
    for (Index i = 0; i < back.count(); ++i)
      CHECK(back.values(i) == static_cast<double>(static_cast<float>(dense(back.support[i]))));
    const SparseGradient again = decompress_gradient(unpack(bytes));
    CHECK(again.support == back.support);
  }
}

TEST_CASE("bloom pd variant byte changes the selected slice") {
  const SparseGradient sg =
      make_sparse(64, {2, 9, 17, 30, 41, 50, 61, 63},
                  {8.0, 7.5, 7.0, 6.5, 6.0, 5.5, 5.0, 4.5});
  Vector dense = to_dense(sg);
  auto run = [&](PdVariant v) {
    PipelineConfig cfg;
    cfg.index_method = IndexMethod::BloomPd;
    cfg.fpr = 0.3;  // wide filter, many false positives
    cfg.seed = 12;
    cfg.pd_variant = v;
    return decompress_gradient(unpack(pack(compress_gradient(sg, cfg, &dense)))).support;
  };
  const auto left = run(PdVariant::Leftmost);
  const auto mid = run(PdVariant::Middle);
  const auto right = run(PdVariant::Rightmost);
  CHECK(left != right);
  CHECK(left.size() == mid.size());
  CHECK(mid.size() == right.size());
  CHECK(left.front() <= mid.front());
  CHECK(mid.back() <= right.back());
}

TEST_CASE("bloom naive scan reconstructs exactly when no false positive fires") {
  const SparseGradient sg = make_sparse(300, {7, 80, 150, 299}, {1.5, 2.5, -3.5, 4.5});
  PipelineConfig cfg;
  cfg.index_method = IndexMethod::BloomNaive;
  cfg.fpr = 1e-9;
  cfg.seed = 2;
  const SparseGradient back = decompress_gradient(unpack(pack(compress_gradient(sg, cfg))));
  CHECK(back.support == sg.support);
  for (Index i = 0; i < back.count(); ++i) CHECK(back.values(i) == sg.values(i));
}

TEST_CASE("decompress validates structural invariants") {
  const SparseGradient sg = make_sparse(12, {2, 5, 9}, {1.0, 2.0, 3.0});
  PipelineConfig cfg;
  cfg.index_method = IndexMethod::Bitmap;
  Container c = compress_gradient(sg, cfg);

  Container zero_d = c;
  zero_d.d = 0;
  CHECK_THROWS_AS(decompress_gradient(zero_d), CorruptPayloadError);

  Container wrong_r = c;
  wrong_r.r = 2;  // bitmap popcount says 3
  CHECK_THROWS_AS(decompress_gradient(wrong_r), CorruptPayloadError);

  PipelineConfig fit_cfg;
  fit_cfg.index_method = IndexMethod::None;
  fit_cfg.value_method = ValueMethod::FitPoly;
  SparseGradient empty;
  empty.dim = 12;
  CHECK_THROWS_AS(compress_gradient(empty, fit_cfg), Error);

  Vector wrong_dim(5);
  wrong_dim.setZero();
  CHECK_THROWS_AS(compress_gradient(sg, cfg, &wrong_dim), Error);

  // Raw keys must arrive strictly increasing.
  Container unsorted;
  unsorted.d = 10;
  unsorted.r = 2;
  unsorted.index_method = IndexMethod::None;
  unsorted.value_method = ValueMethod::None;
  {
    ByteWriter w;
    w.put_u32(5);
    w.put_u32(3);
    unsorted.index_payload = std::move(w).take();
  }
  {
    ByteWriter w;
    w.put_f32(1.0f);
    w.put_f32(2.0f);
    unsorted.value_payload = std::move(w).take();
  }
  CHECK_THROWS_AS(decompress_gradient(unsorted), CorruptPayloadError);
}

TEST_CASE("volume decomposes the exact bit budget per slot") {
  CounterRng rng(888);
  const Index d = 4096;
  Vector dense(d);
  for (Index i = 0; i < d; ++i) dense(i) = rng.normal();
  std::vector<std::uint32_t> support;
  while (support.size() < 128) support.push_back(static_cast<std::uint32_t>(rng.below(d)));
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  const SparseGradient sg = gather(dense, support);
  const std::uint64_t r = static_cast<std::uint64_t>(sg.count());

  auto report = [&](IndexMethod im, ValueMethod vm) {
    PipelineConfig cfg;
    cfg.index_method = im;
    cfg.value_method = vm;
    cfg.fpr = 0.01;
    cfg.seed = 17;
    const Container c = compress_gradient(sg, cfg, &dense);
    const VolumeReport v = volume(c);
    CHECK(v.total_bits == 8 * pack(c).size());
    CHECK(v.index_bits + v.value_bits + v.reorder_bits + v.metadata_bits == v.total_bits);
    CHECK(v.ratio_dense ==
          doctest::Approx(static_cast<double>(v.total_bits) / (32.0 * static_cast<double>(d))));
    CHECK(v.ratio_sparse ==
          doctest::Approx(static_cast<double>(v.total_bits) / (64.0 * static_cast<double>(r))));
    return v;
  };

  CHECK(report(IndexMethod::None, ValueMethod::None).index_bits == 32 * r);
  CHECK(report(IndexMethod::None, ValueMethod::None).value_bits == 32 * r);
  CHECK(report(IndexMethod::Bitmap, ValueMethod::None).index_bits ==
        static_cast<std::uint64_t>(d));
  CHECK(report(IndexMethod::None, ValueMethod::RawF64).value_bits == 64 * r);

  {
    const RlePayload p = rle_encode(to_bitmap(sg));
    CHECK(report(IndexMethod::Rle, ValueMethod::None).index_bits == p.bits);
  }
  {
    const HuffmanCodec codec = HuffmanCodec::for_index_bytes(static_cast<std::uint64_t>(d));
    const auto enc = codec.encode_indices(sg.support, static_cast<std::uint64_t>(d));
    CHECK(report(IndexMethod::Huffman, ValueMethod::None).index_bits == enc.bits);
  }
  {
    const BloomParams bp = bloom_params(0.01, static_cast<Index>(r));
    CHECK(report(IndexMethod::BloomP2, ValueMethod::None).index_bits == bp.m);
  }
  {
    PipelineConfig cfg;
    cfg.value_method = ValueMethod::FitPoly;
    cfg.degree = 3;
    const Container c = compress_gradient(sg, cfg, &dense);
    ByteReader br(c.value_payload);
    const FitModel m = parse_fit(br, r);
    const VolumeReport v = volume(c);
    CHECK(v.value_bits == 32 * m.segments() * m.coeffs_per_segment());
    CHECK(v.reorder_bits == r * reorder_entry_bits(d));
    CHECK(8 * c.reorder_payload.size() - v.reorder_bits < 8);
  }
  {
    PipelineConfig cfg;
    cfg.value_method = ValueMethod::Quant;
    cfg.quant_bits = 7;
    cfg.quant_bucket = 50;
    const Container c = compress_gradient(sg, cfg, &dense);
    const std::uint64_t nb = (r + 49) / 50;
    CHECK(volume(c).value_bits == 32 * nb + 7 * r);
  }
  {
    PipelineConfig cfg;
    cfg.value_method = ValueMethod::DeflateSlot;
    cfg.slot_codec = ByteCodec::Store;
    const Container c = compress_gradient(sg, cfg, &dense);
    CHECK(volume(c).value_bits == 32 * r);  // framing is metadata
  }
}

TEST_CASE("volume rejects payloads inconsistent with their method") {
  Container c;
  c.d = 100;
  c.r = 3;
  c.index_method = IndexMethod::Bitmap;
  c.value_method = ValueMethod::None;
  c.index_payload.assign(5, 0);  // needs ceil(100/8) = 13 bytes
  CHECK_THROWS_AS(volume(c), CorruptPayloadError);

  c.index_method = IndexMethod::None;
  c.index_payload.assign(8, 0);  // needs 12 bytes for r = 3
  CHECK_THROWS_AS(volume(c), CorruptPayloadError);
}

TEST_CASE("golden containers stay byte-identical") {
  namespace fs = std::filesystem;
  const fs::path dir = GRADPACK_GOLDEN_DIR;
  const bool write = std::getenv("GRADPACK_WRITE_GOLDEN") != nullptr;
  for (const GoldenRecipe& recipe : golden_recipes()) {
    const fs::path file = dir / recipe.name;
    if (write) write_file(file.string(), recipe.bytes);
    INFO("golden file: ", file.string());
    REQUIRE(fs::exists(file));
    const std::vector<std::uint8_t> stored = read_file(file.string());
    CHECK(stored == recipe.bytes);
    const Container c = unpack(stored);
    CHECK(pack(c) == stored);
    const SparseGradient back = decompress_gradient(c);
    CHECK(back.dim == static_cast<Index>(c.d));
    const VolumeReport v = volume(c);
    CHECK(v.total_bits == 8 * stored.size());
  }
}
