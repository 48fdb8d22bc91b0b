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

#include "strokeseg/errors.hpp"
#include "strokeseg/manifest.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>

using namespace strokeseg;
using namespace strokeseg::io;

namespace {

nlohmann::json make_doc(int n, int k) {
  nlohmann::json cases = nlohmann::json::array(), folds = nlohmann::json::object();
  for (int i = 0; i < n; ++i) {
    const std::string id = "c" + std::to_string(i);
    cases.push_back({{"case_id", id}, {"dwi", id + "_dwi.nii.gz"}, {"adc", id + "_adc.nii.gz"},
                     {"label", id + "_msk.nii.gz"}});
    if (k > 0) folds[id] = i % k;
  }
  return {{"cases", cases}, {"folds", folds}};
}

}  // namespace

TEST(Manifest, EmptyDocumentGivesEmptyManifest) {
  const auto m = parse_manifest(R"({"cases": []})");
  EXPECT_TRUE(m.cases.empty());
  EXPECT_EQ(m.fold_count(), 0);
  EXPECT_TRUE(parse_manifest("{}").cases.empty());
}

TEST(Manifest, DuplicateIdIsValidationError) {
  auto doc = make_doc(2, 0);
  doc["cases"][1]["case_id"] = "c0";
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);
}

TEST(Manifest, FiveFoldsOfFifty) {
  const auto m = parse_manifest(make_doc(250, 5).dump());
  ASSERT_EQ(m.fold_count(), 5);
  for (int f = 0; f < 5; ++f) {
    EXPECT_EQ(m.cases_in_fold(f).size(), 50u);
    EXPECT_EQ(m.cases_outside_fold(f).size(), 200u);
  }
  EXPECT_NO_THROW(m.validate(5));
  EXPECT_THROW(m.validate(4), ValidationError);
}

TEST(Manifest, FoldRulesEnforced) {
  auto doc = make_doc(4, 2);
  doc["folds"]["c0"] = -1;
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);

  doc = make_doc(4, 2);
  doc["folds"]["ghost"] = 0;
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);

  doc = make_doc(4, 2);
  doc["folds"].erase("c3");
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);

  doc = make_doc(5, 0);
  for (int i = 0; i < 5; ++i) doc["folds"]["c" + std::to_string(i)] = i < 4 ? 0 : 1;
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);  // sizes 4 and 1
}

TEST(Manifest, UnknownFieldsRejected) {
  auto doc = make_doc(1, 0);
  doc["extra"] = 1;
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);
  doc = make_doc(1, 0);
  doc["cases"][0]["t1"] = "x.nii";
  EXPECT_THROW(parse_manifest(doc.dump()), ValidationError);
}

TEST(Manifest, MalformedJsonIsFormatError) {
  EXPECT_THROW(parse_manifest("{not json"), FormatError);
  EXPECT_THROW(parse_manifest("[]"), FormatError);
}

TEST(Manifest, UnlabeledAndFlairCarried) {
  const auto m = parse_manifest(
      R"({"cases": [{"case_id": "a", "dwi": "d.nii", "adc": "a.nii", "flair": "f.nii"}]})", "/data");
  ASSERT_EQ(m.cases.size(), 1u);
  EXPECT_FALSE(m.cases[0].labeled());
  EXPECT_EQ(m.cases[0].dwi, std::filesystem::path("/data/d.nii"));
  EXPECT_EQ(*m.cases[0].flair, std::filesystem::path("/data/f.nii"));
  EXPECT_TRUE(m.labeled_cases().empty());
}

TEST(Manifest, SaveLoadRoundTripAndRelativePaths) {
  testutil::TempDir dir("manifest");
  std::ofstream(dir / "m.json") << make_doc(6, 3).dump();
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.cases[2].dwi, (dir.path() / "c2_dwi.nii.gz").lexically_normal());
  save_manifest(m, dir / "copy.json");
  const auto back = load_manifest(dir / "copy.json");
  EXPECT_EQ(dump_manifest(back), dump_manifest(m));
  EXPECT_EQ(back.fold_of, m.fold_of);
}

TEST(Manifest, MissingFilesReportedWithCaseId) {
  const auto m = parse_manifest(make_doc(1, 0).dump(), "/nonexistent");
  try {
    m.check_files_exist();
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("c0"), std::string::npos);
  }
  EXPECT_THROW(load_manifest("/nonexistent/m.json"), LoadError);
}

TEST(Manifest, FindUnknownIdThrows) {
  const auto m = parse_manifest(make_doc(2, 0).dump());
  EXPECT_EQ(m.find("c1").case_id, "c1");
  EXPECT_THROW(m.find("zz"), ValidationError);
}
