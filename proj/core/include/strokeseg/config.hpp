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

#include "strokeseg/inference.hpp"
#include "strokeseg/metrics.hpp"
#include "strokeseg/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace strokeseg::config {

struct InferenceOptions {
  infer::SlidingWindowOptions window;
  /// Also write the foreground probability map next to each mask.
  bool export_probabilities = false;
};

struct MetricsOptions {
  metrics::Connectivity connectivity = metrics::Connectivity::Vertex;
  metrics::LesionMatching matching = metrics::LesionMatching::AnyOverlap;
};

/// Every tunable of a run. Sections in the JSON document:
/// manifest, output_dir, network, train, loss, augment, crop, preprocess,
/// inference, metrics. Unknown keys are rejected at every level.
struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "runs";
  train::TrainConfig train;
  InferenceOptions inference;
  MetricsOptions metrics;

  void validate() const;
};

/// Relative paths resolve against `base_dir`; train.checkpoint_dir resolves
/// against output_dir. Throws ConfigError.
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Fully resolved document; parse_config(to_json(c)) == c.
nlohmann::json to_json(const PipelineConfig& cfg);
nlohmann::json train_to_json(const train::TrainConfig& cfg);

/// 64-bit FNV-1a of the compact JSON text, as 16 hex digits.
std::string content_hash(const nlohmann::json& doc);

}  // namespace strokeseg::config
