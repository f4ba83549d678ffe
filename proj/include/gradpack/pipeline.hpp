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

#include "gradpack/bloom.hpp"
#include "gradpack/codecs.hpp"
#include "gradpack/container.hpp"
#include "gradpack/curvefit.hpp"
#include "gradpack/gradient.hpp"

namespace gradpack {

/// End-to-end encoder settings for one tensor. Sparsification happens before
/// the pipeline: callers pass the sparse gradient (and, when one exists, the
/// dense original for Bloom policies to gather true values from).
struct PipelineConfig {
  IndexMethod index_method = IndexMethod::None;
  ValueMethod value_method = ValueMethod::None;
  double fpr = 0.01;                            ///< Bloom target FPR
  PdVariant pd_variant = PdVariant::Leftmost;   ///< for BloomPd
  int degree = 5;                               ///< fit polynomial degree
  int max_segments = 0;                         ///< fit cap; 0 = heuristic
  int quant_bits = 7;
  std::uint32_t quant_bucket = 512;
  ByteCodec slot_codec = ByteCodec::Deflate;
  std::uint64_t seed = 0;
};

/// Seed streams derived from the master seed. The Bloom selection stream is a
/// function of the two filter seeds, so a decoder replays P1/P2 selection
/// from the serialized filter alone.
std::uint64_t derive_filter_seed_a(std::uint64_t seed);
std::uint64_t derive_filter_seed_b(std::uint64_t seed);
std::uint64_t derive_selection_seed(std::uint64_t seed_a, std::uint64_t seed_b);
std::uint64_t derive_quant_seed(std::uint64_t seed);

/// Compress one sparse gradient into a container. `dense` may be null; when
/// present, Bloom policies gather transmitted values from it (so false
/// positives carry true gradient values); otherwise values come from the
/// sparse gradient and indices outside its support carry zero.
Container compress_gradient(const SparseGradient& sg, const PipelineConfig& config,
                            const Vector* dense = nullptr);

/// Inverse of compress_gradient. Containers are self-describing; no config
/// is needed. Naive Bloom decoding reproduces the pointer-scan misalignment
/// by design.
SparseGradient decompress_gradient(const Container& c);

}  // namespace gradpack
