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

#include "strokeseg/manifest.hpp"
#include "strokeseg/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace strokeseg::metrics {

enum class Connectivity { Face = 6, Edge = 18, Vertex = 26 };

/// Parses 6, 18 or 26.
Connectivity connectivity_from_int(int n);

struct LabeledComponents {
  Extent3 dims;
  std::vector<std::int32_t> component_map;  // 0 background, 1..count
  std::int32_t count = 0;
  std::vector<std::int64_t> voxel_counts;  // index id - 1
  Connectivity connectivity = Connectivity::Vertex;
};

/// Component ids ascend with the scan-order position of each component's first voxel.
LabeledComponents connected_components(const SegmentationMask& mask,
                                       Connectivity connectivity = Connectivity::Vertex);

enum class LesionMatching {
  /// A GT lesion is detected when any predicted voxel touches it; a predicted
  /// lesion is a false positive when it touches no GT voxel.
  AnyOverlap,
  /// Greedy one-to-one pairing by descending overlap size.
  OneToOne,
};

/// 2|P n G| / (|P| + |G|); 1 when both are empty.
double dice_score(const SegmentationMask& pred, const SegmentationMask& gt);
/// 2TP / (2TP + FP + FN) over lesions; 1 when neither mask has lesions.
double lesion_f1(const SegmentationMask& pred, const SegmentationMask& gt,
                 Connectivity connectivity = Connectivity::Vertex,
                 LesionMatching matching = LesionMatching::AnyOverlap);
/// | |P| - |G| | * voxel volume, in millilitres. `spacing` in mm.
double abs_volume_difference(const SegmentationMask& pred, const SegmentationMask& gt, const Vec3& spacing);
/// Uses the gt grid spacing.
double abs_volume_difference(const SegmentationMask& pred, const SegmentationMask& gt);
std::int64_t lesion_count_difference(const SegmentationMask& pred, const SegmentationMask& gt,
                                     Connectivity connectivity = Connectivity::Vertex);

struct CaseMetrics {
  std::string case_id;
  double dice = 0.0;
  double lesion_f1 = 0.0;
  double avd_ml = 0.0;
  std::int64_t lesion_count_diff = 0;
};

struct MetricsReport {
  std::vector<CaseMetrics> rows;  // sorted by case_id
  std::vector<std::string> missing;
  double mean_dice = 0.0;
  double mean_lesion_f1 = 0.0;
  double mean_avd_ml = 0.0;
  double mean_lesion_count_diff = 0.0;

  /// Recomputes the means from `rows`.
  void aggregate();
  /// Four columns: dice, lesion F1, volume difference, count difference.
  std::string summary_row() const;
};

CaseMetrics evaluate_case(const std::string& case_id, const SegmentationMask& pred, const SegmentationMask& gt,
                          Connectivity connectivity = Connectivity::Vertex,
                          LesionMatching matching = LesionMatching::AnyOverlap);

struct EvaluateOptions {
  Connectivity connectivity = Connectivity::Vertex;
  LesionMatching matching = LesionMatching::AnyOverlap;
  bool allow_missing = false;
};

/// Scores `<pred_dir>/<case_id>.nii.gz` against every labeled case. Missing
/// predictions throw LoadError listing them all, unless allow_missing is set.
/// Predictions must lie on the ground-truth grid (AlignmentError otherwise).
MetricsReport evaluate_cases(const std::filesystem::path& pred_dir, const io::DatasetManifest& manifest,
                             const EvaluateOptions& options = {});

/// Writes `metrics.csv` (case_id,dice,lesion_f1,avd_ml,lesion_count_diff) and
/// `summary.json` into `out_dir`.
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

}  // namespace strokeseg::metrics
