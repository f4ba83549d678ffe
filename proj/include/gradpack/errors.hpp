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

#include <stdexcept>
#include <string>

namespace gradpack {

/// Base class of every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A byte stream failed structural validation while decoding.
struct DecodeError : Error {
  using Error::Error;
};

/// The stream ended before a complete structure could be read.
struct TruncatedError : DecodeError {
  using DecodeError::DecodeError;
};

/// A stored checksum does not match the recomputed one.
struct ChecksumError : DecodeError {
  using DecodeError::DecodeError;
};

/// A method or codec id is not in the registry.
struct UnknownMethodError : DecodeError {
  using DecodeError::DecodeError;
};

/// A payload parsed structurally but violates its own invariants.
struct CorruptPayloadError : DecodeError {
  using DecodeError::DecodeError;
};

/// An iterative fit failed to converge to a usable model.
struct FitError : Error {
  using Error::Error;
};

}  // namespace gradpack
