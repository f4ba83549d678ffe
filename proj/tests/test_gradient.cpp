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

#include "gradpack/gradient.hpp"
#include "gradpack/rng.hpp"

using namespace gradpack;

namespace {

SparseGradient make(Index dim, std::vector<std::uint32_t> support, std::vector<double> values) {
  SparseGradient g;
  g.dim = dim;
  g.support = std::move(support);
  g.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  return g;
}

}  // namespace

TEST_CASE("validate accepts well-formed gradients") {
  CHECK_NOTHROW(validate(make(5, {0, 2, 4}, {1.0, -2.0, 0.5})));
  CHECK_NOTHROW(validate(make(1, {0}, {0.0})));     // zero values are allowed
  CHECK_NOTHROW(validate(make(3, {}, {})));          // empty support is allowed
}

TEST_CASE("validate rejects broken invariants") {
  CHECK_THROWS_AS(validate(make(0, {}, {})), Error);                    // dim >= 1
  CHECK_THROWS_AS(validate(make(5, {2, 1}, {1, 1})), Error);            // unsorted
  CHECK_THROWS_AS(validate(make(5, {1, 1}, {1, 1})), Error);            // duplicate
  CHECK_THROWS_AS(validate(make(5, {1, 5}, {1, 1})), Error);            // out of range
  CHECK_THROWS_AS(validate(make(5, {1, 2}, {1, 1, 1})), Error);         // size mismatch
}

TEST_CASE("to_dense scatters and gather inverts it") {
  const SparseGradient g = make(6, {1, 3, 5}, {1.5, -2.0, 4.0});
  const Vector dense = to_dense(g);
  CHECK(dense.size() == 6);
  CHECK(dense(0) == 0.0);
  CHECK(dense(1) == 1.5);
  CHECK(dense(3) == -2.0);
  CHECK(dense(5) == 4.0);
  const SparseGradient back = gather(dense, {1, 3, 5});
  CHECK(back.support == g.support);
  CHECK(back.values == g.values);
}

TEST_CASE("bitmap set/test/popcount") {
  IndexBitmap b(130);
  CHECK(b.words.size() == 3);
  b.set(0);
  b.set(64);
  b.set(129);
  CHECK(b.test(0));
  CHECK(b.test(64));
  CHECK(b.test(129));
  CHECK_FALSE(b.test(1));
  CHECK(b.popcount() == 3);
}

TEST_CASE("bitmap round trips through support") {
  const std::vector<std::uint32_t> support = {0, 7, 8, 63, 64, 99};
  const IndexBitmap b = support_to_bitmap(100, support);
  CHECK(bitmap_support(b) == support);
  const SparseGradient g = make(100, support, {1, 2, 3, 4, 5, 6});
  CHECK(bitmap_support(to_bitmap(g)) == support);
}

TEST_CASE("bitmap byte serialization is LSB-first") {
  // bit i lands in byte i/8, position i%8.
  const IndexBitmap b = support_to_bitmap(16, std::vector<std::uint32_t>{0, 9});
  const std::vector<std::uint8_t> bytes = bitmap_to_bytes(b);
  CHECK(bytes == std::vector<std::uint8_t>{0x01, 0x02});

  const IndexBitmap back = bitmap_from_bytes(bytes, 16);
  CHECK(bitmap_support(back) == std::vector<std::uint32_t>{0, 9});
}

TEST_CASE("bitmap byte length is ceil(dim/8)") {
  CHECK(bitmap_to_bytes(IndexBitmap(1)).size() == 1);
  CHECK(bitmap_to_bytes(IndexBitmap(8)).size() == 1);
  CHECK(bitmap_to_bytes(IndexBitmap(9)).size() == 2);
  CHECK(bitmap_to_bytes(IndexBitmap(64)).size() == 8);
  CHECK(bitmap_to_bytes(IndexBitmap(65)).size() == 9);
}

TEST_CASE("bitmap_from_bytes rejects malformed payloads") {
  CHECK_THROWS_AS((void)bitmap_from_bytes(std::vector<std::uint8_t>{0x01}, 16),
                  DecodeError);  // too short
  CHECK_THROWS_AS((void)bitmap_from_bytes(std::vector<std::uint8_t>{0x01, 0x00, 0x00}, 16),
                  DecodeError);  // too long
  // dim = 12: bits 12..15 of the last byte must be clear.
  CHECK_THROWS_AS((void)bitmap_from_bytes(std::vector<std::uint8_t>{0x00, 0xF0}, 12),
                  CorruptPayloadError);
  CHECK_NOTHROW((void)bitmap_from_bytes(std::vector<std::uint8_t>{0x00, 0x0F}, 12));
}

TEST_CASE("from_bitmap pairs values with set bits in index order") {
  const IndexBitmap b = support_to_bitmap(10, std::vector<std::uint32_t>{2, 5, 7});
  Vector v(3);
  v << 9.0, -1.0, 3.0;
  const SparseGradient g = from_bitmap(b, v);
  CHECK(g.support == std::vector<std::uint32_t>{2, 5, 7});
  CHECK(g.values == v);
  Vector wrong(2);
  wrong << 1.0, 2.0;
  CHECK_THROWS_AS((void)from_bitmap(b, wrong), Error);
}

TEST_CASE("residual_sq_norm is the squared error of the kept coordinates") {
  Vector g(4);
  g << 1.0, 2.0, 3.0, 4.0;
  const SparseGradient s = make(4, {1, 3}, {2.0, 4.0});
  CHECK(residual_sq_norm(g, s) == doctest::Approx(1.0 + 9.0).epsilon(1e-15));
}

TEST_CASE("bitmap round trip survives random supports") {
  CounterRng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.below(300));
    std::vector<std::uint32_t> support;
    for (Index i = 0; i < d; ++i)
      if (rng.below(4) == 0) support.push_back(static_cast<std::uint32_t>(i));
    const IndexBitmap b = support_to_bitmap(d, support);
    CHECK(b.popcount() == static_cast<Index>(support.size()));
    CHECK(bitmap_support(bitmap_from_bytes(bitmap_to_bytes(b), d)) == support);
  }
}
