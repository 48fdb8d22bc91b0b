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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace strokeseg::io {

struct CaseRecord {
  std::string case_id;
  std::filesystem::path dwi;
  std::filesystem::path adc;
  std::optional<std::filesystem::path> flair;  // carried, never consumed
  std::optional<std::filesystem::path> label;

  bool labeled() const { return label.has_value(); }
};

/// Case list plus fold assignment.
///
/// JSON layout (field names are part of the file format):
///
///     { "cases": [ {"case_id": "...", "dwi": "...", "adc": "...",
///                   "flair": "...", "label": "..."} ],
///       "folds": { "<case_id>": <int>, ... } }
///
/// `flair` and `label` are optional; `folds` may be empty or absent for an
/// unsplit manifest. Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::vector<CaseRecord> cases;
  std::map<std::string, int> fold_of;

  /// Number of folds implied by fold_of (max index + 1), 0 when unsplit.
  int fold_count() const;
  std::vector<const CaseRecord*> labeled_cases() const;
  std::vector<const CaseRecord*> cases_in_fold(int fold) const;
  std::vector<const CaseRecord*> cases_outside_fold(int fold) const;
  const CaseRecord& find(const std::string& case_id) const;

  /// Throws ValidationError on duplicate ids, unknown/unlabeled fold entries,
  /// negative fold indices, labeled cases missing from a non-empty fold map,
  /// empty folds or fold sizes differing by more than one.
  void validate() const;
  /// validate() plus: every fold index < `k`.
  void validate(int k) const;
  /// Throws LoadError naming the case when a required file does not exist.
  void check_files_exist() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Serialized form; save_manifest writes exactly this text.
std::string dump_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});

}  // namespace strokeseg::io
