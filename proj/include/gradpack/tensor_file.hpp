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

#include <string>

#include "gradpack/gradient.hpp"

namespace gradpack {

/// Tensor file layout: magic "DRT1", d as u64 LE, then d float32 LE values.
std::vector<std::uint8_t> tensor_to_bytes(const Eigen::Ref<const Vector>& g);
Vector tensor_from_bytes(std::span<const std::uint8_t> bytes);

void write_tensor(const std::string& path, const Eigen::Ref<const Vector>& g);
Vector read_tensor(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace gradpack
