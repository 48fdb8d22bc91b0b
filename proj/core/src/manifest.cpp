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

#include "strokeseg/manifest.hpp"

#include "strokeseg/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace strokeseg::io {

using nlohmann::json;

int DatasetManifest::fold_count() const {
  int k = 0;
  for (const auto& [id, f] : fold_of) k = std::max(k, f + 1);
  return k;
}

std::vector<const CaseRecord*> DatasetManifest::labeled_cases() const {
  std::vector<const CaseRecord*> out;
  for (const auto& c : cases) {
    if (c.labeled()) out.push_back(&c);
  }
  return out;
}

std::vector<const CaseRecord*> DatasetManifest::cases_in_fold(int fold) const {
  std::vector<const CaseRecord*> out;
  for (const auto& c : cases) {
    auto it = fold_of.find(c.case_id);
    if (it != fold_of.end() && it->second == fold) out.push_back(&c);
  }
  return out;
}

std::vector<const CaseRecord*> DatasetManifest::cases_outside_fold(int fold) const {
  std::vector<const CaseRecord*> out;
  for (const auto& c : cases) {
    auto it = fold_of.find(c.case_id);
    if (it != fold_of.end() && it->second != fold) out.push_back(&c);
  }
  return out;
}

const CaseRecord& DatasetManifest::find(const std::string& case_id) const {
  for (const auto& c : cases) {
    if (c.case_id == case_id) return c;
  }
  throw ValidationError("unknown case id: " + case_id);
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& c : cases) {
    if (c.case_id.empty()) throw ValidationError("case with empty case_id");
    if (!ids.insert(c.case_id).second) throw ValidationError("duplicate case_id: " + c.case_id);
  }
  if (fold_of.empty()) return;

  for (const auto& [id, f] : fold_of) {
    if (!ids.count(id)) throw ValidationError("fold entry for unknown case_id: " + id);
    if (f < 0) throw ValidationError("fold index out of range for case " + id + ": " + std::to_string(f));
    if (!find(id).labeled()) throw ValidationError("fold entry for unlabeled case: " + id);
  }
  for (const auto& c : cases) {
    if (c.labeled() && !fold_of.count(c.case_id)) {
      throw ValidationError("labeled case missing from folds: " + c.case_id);
    }
  }
  const int k = fold_count();
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& [id, f] : fold_of) ++sizes[static_cast<std::size_t>(f)];
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  if (*lo == 0) throw ValidationError("fold map has an empty fold");
  if (*hi - *lo > 1) {
    throw ValidationError("fold sizes differ by more than one (" + std::to_string(*lo) + " vs " +
                          std::to_string(*hi) + ")");
  }
}

void DatasetManifest::validate(int k) const {
  for (const auto& [id, f] : fold_of) {
    if (f >= k) throw ValidationError("fold index out of range for case " + id + ": " + std::to_string(f));
  }
  validate();
}

void DatasetManifest::check_files_exist() const {
  auto need = [](const CaseRecord& c, const std::filesystem::path& p, const char* what) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) {
      throw LoadError("case " + c.case_id + ": missing " + what + " file " + p.string());
    }
  };
  for (const auto& c : cases) {
    need(c, c.dwi, "dwi");
    need(c, c.adc, "adc");
    if (c.label) need(c, *c.label, "label");
  }
}

namespace {

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string required_string(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ValidationError("manifest case #" + std::to_string(index) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("manifest must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "cases" && key != "folds") throw ValidationError("unknown manifest field: " + key);
  }

  DatasetManifest m;
  if (doc.contains("cases")) {
    const json& cases = doc.at("cases");
    if (!cases.is_array()) throw FormatError("manifest 'cases' must be an array");
    std::size_t index = 0;
    for (const json& c : cases) {
      if (!c.is_object()) throw FormatError("manifest case entries must be objects");
      for (const auto& [key, value] : c.items()) {
        if (key != "case_id" && key != "dwi" && key != "adc" && key != "flair" && key != "label") {
          throw ValidationError("unknown case field: " + key);
        }
      }
      CaseRecord rec;
      rec.case_id = required_string(c, "case_id", index);
      rec.dwi = resolve(required_string(c, "dwi", index), base_dir);
      rec.adc = resolve(required_string(c, "adc", index), base_dir);
      if (c.contains("flair") && !c.at("flair").is_null()) rec.flair = resolve(required_string(c, "flair", index), base_dir);
      if (c.contains("label") && !c.at("label").is_null()) rec.label = resolve(required_string(c, "label", index), base_dir);
      m.cases.push_back(std::move(rec));
      ++index;
    }
  }
  if (doc.contains("folds")) {
    const json& folds = doc.at("folds");
    if (!folds.is_object()) throw FormatError("manifest 'folds' must be an object");
    for (const auto& [id, f] : folds.items()) {
      if (!f.is_number_integer()) throw ValidationError("fold index for " + id + " must be an integer");
      m.fold_of[id] = f.get<int>();
    }
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open manifest: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  std::filesystem::path base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_manifest(ss.str(), std::filesystem::absolute(base));
}

std::string dump_manifest(const DatasetManifest& manifest) {
  json cases = json::array();
  for (const auto& c : manifest.cases) {
    json entry = {{"case_id", c.case_id}, {"dwi", c.dwi.string()}, {"adc", c.adc.string()}};
    if (c.flair) entry["flair"] = c.flair->string();
    if (c.label) entry["label"] = c.label->string();
    cases.push_back(std::move(entry));
  }
  json folds = json::object();
  for (const auto& [id, f] : manifest.fold_of) folds[id] = f;
  json doc = {{"cases", std::move(cases)}, {"folds", std::move(folds)}};
  return doc.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << dump_manifest(manifest);
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace strokeseg::io
