// Copyright 2026 The strokeseg Authors
//
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

namespace strokeseg {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened or read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// File content does not follow the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Writing to disk failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Array shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input grids are not aligned closely enough to be combined voxel-wise.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A documented invariant of a domain object was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Configuration document is malformed or violates its schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Weight or checkpoint archive problems (version, shape or name mismatch).
class ArchiveError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace strokeseg
