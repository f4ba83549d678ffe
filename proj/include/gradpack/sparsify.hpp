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

#include "gradpack/gradient.hpp"
#include "gradpack/rng.hpp"

namespace gradpack {

/// Keep the r entries of largest magnitude; magnitude ties keep the lower
/// index. Deterministic. pre: 1 <= r <= d.
SparseGradient top_r(const Eigen::Ref<const Vector>& g, Index r);

/// Keep a uniform random r-subset of all d indices, drawn from the caller's
/// generator. pre: 1 <= r <= d.
SparseGradient random_r(const Eigen::Ref<const Vector>& g, Index r, CounterRng& rng);

/// Identity "sparsifier": full support [0, d).
SparseGradient full_support(const Eigen::Ref<const Vector>& g);

}  // namespace gradpack
