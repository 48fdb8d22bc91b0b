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

#include "strokeseg/segresnet.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace strokeseg::nn {

// File layout:
//   8 bytes   magic "SSEGARC\0"
//   u32       format version
//   u64       header length in bytes
//   header    UTF-8 JSON:
//             { "kind": "weights" | "checkpoint", "format_version": 1,
//               "network": {...}, "meta": {...},
//               "tensors": [ {"name", "shape", "dtype", "offset"} ] }
//   payload   raw little-endian tensor data; offsets are relative to the
//             first payload byte.

inline constexpr std::uint32_t kArchiveVersion = 1;

enum class DType { Float32, Float64 };

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  DType dtype = DType::Float32;
  std::vector<double> values;  // widened copy; narrowed on write for Float32
};

struct Archive {
  std::string kind = "weights";
  NetworkConfig network;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

nlohmann::json network_to_json(const NetworkConfig& cfg);
/// Rejects unknown keys; missing keys keep their defaults.
NetworkConfig network_from_json(const nlohmann::json& j);

void write_archive(const Archive& archive, const std::filesystem::path& path);
/// Throws LoadError when unreadable, ArchiveError on a bad magic, unsupported
/// version, malformed header or truncated payload.
Archive read_archive(const std::filesystem::path& path);

template <typename T>
Archive make_weights_archive(const SegResNet<T>& net);

template <typename T>
void save_weights(const SegResNet<T>& net, const std::filesystem::path& path);

struct LoadReport {
  std::vector<std::string> loaded;
  /// Present in the archive with a different shape; left freshly initialized.
  std::vector<std::string> skipped;
  /// Expected by the network, absent from the archive.
  std::vector<std::string> missing;
  /// Present in the archive, unknown to the network.
  std::vector<std::string> unexpected;
};

/// Copies archive parameters into `net`. Strict mode throws ArchiveError
/// listing every mismatch and leaves `net` untouched; lenient mode applies
/// whatever matches and reports the rest.
template <typename T>
LoadReport load_parameters(SegResNet<T>& net, const Archive& archive, bool strict);

/// Builds a network for `cfg` (seeded with `init_seed`) and loads `path` into it.
template <typename T>
SegResNet<T> load_weights(const std::filesystem::path& path, const NetworkConfig& cfg, bool strict,
                          LoadReport* report = nullptr, std::uint64_t init_seed = 0);

}  // namespace strokeseg::nn
