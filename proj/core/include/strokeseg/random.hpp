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

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace strokeseg {

/// Purpose tags mixed into derived seeds so independent consumers of one
/// base seed never share a stream.
enum class StreamPurpose : std::uint32_t {
  FoldSplit = 1,
  WeightInit = 2,
  Shuffle = 3,
  Sample = 4,
  Synthetic = 5,
};

/// Deterministic engine for (seed, purpose, ids...). The same arguments give
/// the same stream in every process.
inline std::mt19937_64 make_stream(std::uint64_t seed, StreamPurpose purpose,
                                   std::initializer_list<std::uint64_t> ids = {}) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  words.push_back(static_cast<std::uint32_t>(purpose));
  for (std::uint64_t id : ids) {
    words.push_back(static_cast<std::uint32_t>(id));
    words.push_back(static_cast<std::uint32_t>(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace strokeseg
