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

#include "gradpack/tensor_file.hpp"

#include <fstream>

#include "gradpack/bitio.hpp"

namespace gradpack {

namespace {
constexpr std::uint8_t kMagic[4] = {'D', 'R', 'T', '1'};
}

std::vector<std::uint8_t> tensor_to_bytes(const Eigen::Ref<const Vector>& g) {
  if (g.size() < 1) throw Error("tensor: dim must be >= 1");
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u64(static_cast<std::uint64_t>(g.size()));
  for (Index i = 0; i < g.size(); ++i) w.put_f32(static_cast<float>(g(i)));
  return std::move(w).take();
}

Vector tensor_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw DecodeError("tensor: bad magic");
  const std::uint64_t d = r.get_u64();
  if (d < 1) throw CorruptPayloadError("tensor: dim must be >= 1");
  if (r.remaining() != 4 * d) throw TruncatedError("tensor: value section size mismatch");
  Vector g(static_cast<Index>(d));
  for (std::uint64_t i = 0; i < d; ++i) g(static_cast<Index>(i)) = r.get_f32();
  return g;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

void write_tensor(const std::string& path, const Eigen::Ref<const Vector>& g) {
  write_file(path, tensor_to_bytes(g));
}

Vector read_tensor(const std::string& path) { return tensor_from_bytes(read_file(path)); }

}  // namespace gradpack
