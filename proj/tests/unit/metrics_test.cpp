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
#include "strokeseg/metrics.hpp"
#include "strokeseg/nifti.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <deque>
#include <fstream>
#include <sstream>

using namespace strokeseg;
using namespace strokeseg::metrics;
using testutil::TempDir;

namespace {

SegmentationMask mask(const Extent3& d, std::initializer_list<std::array<int, 3>> on, double spacing = 1.0) {
  SegmentationMask m(testutil::grid(d.x, d.y, d.z, spacing, spacing, spacing));
  for (const auto& p : on) m.at(p[0], p[1], p[2]) = 1;
  return m;
}

// Breadth-first flood fill, ids assigned in scan order of the seed voxel.
std::vector<std::int32_t> flood_fill(const SegmentationMask& m, int conn, std::int32_t& count) {
  const Extent3 d = m.dims();
  std::vector<std::int32_t> out(m.labels.size(), 0);
  count = 0;
  for (std::int64_t k = 0; k < d.z; ++k)
    for (std::int64_t j = 0; j < d.y; ++j)
      for (std::int64_t i = 0; i < d.x; ++i) {
        if (!m.at(i, j, k) || out[d.index(i, j, k)]) continue;
        ++count;
        std::deque<std::array<std::int64_t, 3>> q{{i, j, k}};
        out[d.index(i, j, k)] = count;
        while (!q.empty()) {
          const auto [x, y, z] = q.front();
          q.pop_front();
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int n = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (n == 0 || (conn == 6 && n > 1) || (conn == 18 && n > 2)) continue;
                const std::int64_t a = x + dx, b = y + dy, c = z + dz;
                if (a < 0 || b < 0 || c < 0 || a >= d.x || b >= d.y || c >= d.z) continue;
                if (!m.at(a, b, c) || out[d.index(a, b, c)]) continue;
                out[d.index(a, b, c)] = count;
                q.push_back({a, b, c});
              }
        }
      }
  return out;
}

}  // namespace

TEST(Dice, Examples) {
  // 2 * 3 / (5 + 5)
  const auto p = mask({10, 1, 1}, {{{0, 0, 0}}, {{1, 0, 0}}, {{2, 0, 0}}, {{3, 0, 0}}, {{4, 0, 0}}});
  const auto g = mask({10, 1, 1}, {{{2, 0, 0}}, {{3, 0, 0}}, {{4, 0, 0}}, {{5, 0, 0}}, {{6, 0, 0}}});
  EXPECT_DOUBLE_EQ(dice_score(p, g), 0.6);
  EXPECT_DOUBLE_EQ(dice_score(mask({3, 3, 3}, {}), mask({3, 3, 3}, {})), 1.0);
  EXPECT_DOUBLE_EQ(dice_score(mask({3, 3, 3}, {{{1, 1, 1}}}), mask({3, 3, 3}, {})), 0.0);
  EXPECT_DOUBLE_EQ(dice_score(g, g), 1.0);
}

TEST(Dice, GridMismatchIsAlignmentError) {
  EXPECT_THROW(dice_score(mask({3, 3, 3}, {}), mask({3, 3, 4}, {})), AlignmentError);
  EXPECT_THROW(dice_score(mask({3, 3, 3}, {}), mask({3, 3, 3}, {}, 2.0)), AlignmentError);
}

TEST(Components, DiagonalNeighboursDependOnConnectivity) {
  const auto m = mask({3, 3, 3}, {{{0, 0, 0}}, {{1, 1, 1}}});
  EXPECT_EQ(connected_components(m, Connectivity::Vertex).count, 1);
  EXPECT_EQ(connected_components(m, Connectivity::Edge).count, 2);
  EXPECT_EQ(connected_components(m, Connectivity::Face).count, 2);
  const auto e = mask({3, 3, 3}, {{{0, 0, 0}}, {{1, 1, 0}}});
  EXPECT_EQ(connected_components(e, Connectivity::Edge).count, 1);
  EXPECT_EQ(connected_components(e, Connectivity::Face).count, 2);
  EXPECT_EQ(connectivity_from_int(18), Connectivity::Edge);
  EXPECT_THROW(connectivity_from_int(4), ValidationError);
}

TEST(Components, MatchFloodFillOracle) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto m = testutil::random_mask(testutil::grid(16, 16, 16), t % 2 ? 0.2 : 0.08, rng);
    for (int conn : {6, 18, 26}) {
      std::int32_t n = 0;
      const auto ref = flood_fill(m, conn, n);
      const auto cc = connected_components(m, connectivity_from_int(conn));
      ASSERT_EQ(cc.count, n);
      ASSERT_EQ(cc.component_map, ref);
      std::vector<std::int64_t> sizes(static_cast<std::size_t>(n), 0);
      for (auto id : ref)
        if (id) ++sizes[id - 1];
      ASSERT_EQ(cc.voxel_counts, sizes);
    }
  }
}

TEST(LesionF1, Examples) {
  const Extent3 d{12, 1, 1};
  const auto gt = mask(d, {{{0, 0, 0}}, {{5, 0, 0}}});
  EXPECT_DOUBLE_EQ(lesion_f1(gt, gt), 1.0);
  EXPECT_DOUBLE_EQ(lesion_f1(mask(d, {{{10, 0, 0}}}), gt), 0.0);
  // One hit, one missed GT lesion, one false positive: 2 / (2 + 1 + 1).
  EXPECT_DOUBLE_EQ(lesion_f1(mask(d, {{{0, 0, 0}}, {{10, 0, 0}}}), gt), 0.5);
  EXPECT_DOUBLE_EQ(lesion_f1(mask(d, {}), mask(d, {})), 1.0);
  EXPECT_DOUBLE_EQ(lesion_f1(mask(d, {}), gt), 0.0);
}

TEST(LesionF1, OneToOneDiffersWhenOnePredictionSpansTwoLesions) {
  const Extent3 d{5, 1, 1};
  const auto gt = mask(d, {{{0, 0, 0}}, {{2, 0, 0}}});
  const auto pred = mask(d, {{{0, 0, 0}}, {{1, 0, 0}}, {{2, 0, 0}}});
  EXPECT_DOUBLE_EQ(lesion_f1(pred, gt, Connectivity::Vertex, LesionMatching::AnyOverlap), 1.0);
  // One pair matched, one GT lesion unmatched: 2 / (2 + 0 + 1).
  EXPECT_NEAR(lesion_f1(pred, gt, Connectivity::Vertex, LesionMatching::OneToOne), 2.0 / 3.0, 1e-15);
}

TEST(VolumeDifference, MillilitresFromSpacing) {
  SegmentationMask big(testutil::grid(10, 10, 10));
  std::fill(big.labels.begin(), big.labels.end(), 1);
  EXPECT_DOUBLE_EQ(abs_volume_difference(big, SegmentationMask(big.geom)), 1.0);
  SegmentationMask coarse(testutil::grid(5, 5, 5, 2, 2, 2), 1);
  EXPECT_DOUBLE_EQ(abs_volume_difference(SegmentationMask(coarse.geom), coarse), 1.0);
  EXPECT_DOUBLE_EQ(abs_volume_difference(coarse, coarse), 0.0);
  EXPECT_DOUBLE_EQ(abs_volume_difference(big, SegmentationMask(big.geom), Vec3(2, 1, 1)), 2.0);
}

TEST(CountDifference, AbsoluteLesionCountGap) {
  const Extent3 d{9, 1, 1};
  const auto three = mask(d, {{{0, 0, 0}}, {{4, 0, 0}}, {{8, 0, 0}}});
  const auto one = mask(d, {{{4, 0, 0}}});
  EXPECT_EQ(lesion_count_difference(three, one), 2);
  EXPECT_EQ(lesion_count_difference(one, three), 2);
  EXPECT_EQ(lesion_count_difference(one, one), 0);
}

TEST(EvaluateCases, PerfectPredictionsAndReport) {
  TempDir dir("metrics");
  std::filesystem::create_directories(dir / "pred");
  std::string doc = R"({"cases": [)";
  std::mt19937_64 rng(22);
  for (int i = 0; i < 3; ++i) {
    const std::string id = "case" + std::to_string(i);
    auto gt = testutil::random_mask(testutil::grid(8, 8, 8), 0.1, rng);
    gt.at(0, 0, 0) = 1;
    io::save_volume(gt, dir / (id + "_label.nii.gz"));
    io::save_volume(gt, dir / "pred" / (id + ".nii.gz"));
    doc += std::string(i ? "," : "") + R"({"case_id": ")" + id + R"(", "dwi": "x", "adc": "y", "label": ")" + id +
           R"(_label.nii.gz"})";
  }
  doc += "]}";
  const auto manifest = io::parse_manifest(doc, dir.path());

  const auto report = evaluate_cases(dir / "pred", manifest);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].case_id, "case0");
  EXPECT_DOUBLE_EQ(report.mean_dice, 1.0);
  EXPECT_DOUBLE_EQ(report.mean_lesion_f1, 1.0);
  EXPECT_DOUBLE_EQ(report.mean_avd_ml, 0.0);
  EXPECT_DOUBLE_EQ(report.mean_lesion_count_diff, 0.0);
  EXPECT_EQ(report.summary_row(), "1.000 1.000 0.000 0");

  write_report(report, dir / "out");
  std::ifstream csv(dir / "out" / "metrics.csv");
  std::string header, first;
  std::getline(csv, header);
  std::getline(csv, first);
  EXPECT_EQ(header, "case_id,dice,lesion_f1,avd_ml,lesion_count_diff");
  EXPECT_EQ(first, "case0,1.000000,1.000000,0.000000,0");
  std::ifstream js(dir / "out" / "summary.json");
  const auto summary = nlohmann::json::parse(js);
  EXPECT_EQ(summary["cases"], 3);
  EXPECT_EQ(summary["mean"]["dice"], 1.0);

  std::filesystem::remove(dir / "pred" / "case1.nii.gz");
  try {
    evaluate_cases(dir / "pred", manifest);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("case1"), std::string::npos);
  }
  EvaluateOptions lenient;
  lenient.allow_missing = true;
  const auto partial = evaluate_cases(dir / "pred", manifest, lenient);
  EXPECT_EQ(partial.rows.size(), 2u);
  EXPECT_EQ(partial.missing, (std::vector<std::string>{"case1"}));

  io::save_volume(SegmentationMask(testutil::grid(8, 8, 4)), dir / "pred" / "case1.nii.gz");
  EXPECT_THROW(evaluate_cases(dir / "pred", manifest), AlignmentError);
}

TEST(Report, AggregateMeans) {
  MetricsReport r;
  r.rows = {{"a", 0.5, 1.0, 2.0, 1}, {"b", 0.7, 0.0, 4.0, 3}};
  r.aggregate();
  EXPECT_DOUBLE_EQ(r.mean_dice, 0.6);
  EXPECT_DOUBLE_EQ(r.mean_lesion_f1, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_avd_ml, 3.0);
  EXPECT_DOUBLE_EQ(r.mean_lesion_count_diff, 2.0);
  EXPECT_EQ(r.summary_row(), "0.600 0.500 3.000 2");
}
