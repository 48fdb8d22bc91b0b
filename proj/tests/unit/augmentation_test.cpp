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

#include "strokeseg/augmentation.hpp"
#include "strokeseg/errors.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace strokeseg;
using namespace strokeseg::aug;

namespace {

Sample labeled_sample(const Extent3& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto g = testutil::grid(d.x, d.y, d.z);
  Sample s{prep::MultiChannelVolume(g, {"DWI", "ADC"}), testutil::random_mask(g, 0.3, rng)};
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : s.image.data) v = n(rng);
  return s;
}

double mean(const std::vector<float>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST(Flip, TwiceIsIdentity) {
  const auto s = labeled_sample({5, 4, 3}, 1);
  for (const std::array<bool, 3> axes : {std::array<bool, 3>{true, false, false}, {false, true, true}, {true, true, true}}) {
    const auto back = flip(flip(s, axes), axes);
    EXPECT_EQ(back.image.data, s.image.data);
    EXPECT_EQ(back.mask->labels, s.mask->labels);
  }
}

TEST(Flip, AxisZeroReversesIndex) {
  const auto s = labeled_sample({3, 3, 3}, 2);
  const auto f = flip(s, {true, false, false});
  for (int c = 0; c < 2; ++c)
    for (std::int64_t k = 0; k < 3; ++k)
      for (std::int64_t j = 0; j < 3; ++j)
        for (std::int64_t i = 0; i < 3; ++i) {
          const Extent3 d{3, 3, 3};
          ASSERT_EQ(f.image.channel(c)[d.index(i, j, k)], s.image.channel(c)[d.index(2 - i, j, k)]);
          ASSERT_EQ(f.mask->at(i, j, k), s.mask->at(2 - i, j, k));
        }
}

TEST(Flip, ZeroProbabilityIsIdentity) {
  const auto s = labeled_sample({4, 4, 4}, 3);
  AugmentConfig cfg;
  cfg.flip_prob_per_axis = 0.0;
  std::mt19937_64 rng(4);
  const auto out = random_flip(s, cfg, rng);
  EXPECT_EQ(out.image.data, s.image.data);
}

TEST(Spatial, IdentityTransformKeepsSample) {
  const auto s = labeled_sample({6, 5, 4}, 5);
  const auto out = apply_spatial(s, SpatialTransform{});
  for (std::size_t i = 0; i < s.image.data.size(); ++i) ASSERT_NEAR(out.image.data[i], s.image.data[i], 1e-5);
  EXPECT_EQ(out.mask->labels, s.mask->labels);
}

TEST(Spatial, NinetyDegreesAboutZMovesMarker) {
  const auto g = testutil::grid(5, 5, 5);
  Sample s{prep::MultiChannelVolume(g, {"DWI"}), SegmentationMask(g)};
  const Extent3 d{5, 5, 5};
  s.image.data[d.index(4, 2, 1)] = 1.0f;
  s.mask->at(4, 2, 1) = 1;
  SpatialTransform t;
  t.rotation_deg = Vec3(0, 0, 90);
  // Offset (+2, 0, -1) from the centre rotates to (0, +2, -1).
  const auto out = apply_spatial(s, t);
  EXPECT_NEAR(out.image.data[d.index(2, 4, 1)], 1.0f, 1e-5);
  EXPECT_NEAR(std::accumulate(out.image.data.begin(), out.image.data.end(), 0.0), 1.0, 1e-5);
  EXPECT_EQ(out.mask->at(2, 4, 1), 1);
  EXPECT_EQ(out.mask->foreground_count(), 1);
  const Vec3 src = t.source_of(Vec3(2, 4, 1), d);
  EXPECT_TRUE(src.isApprox(Vec3(4, 2, 1), 1e-12));
}

TEST(Intensity, DegenerateParametersAreIdentity) {
  const auto s = labeled_sample({6, 6, 6}, 6);
  IntensityDraw d;
  d.noise_std = 0.0;
  d.scale = 1.0;
  d.shift = 0.0;
  d.smooth_sigma = 0.0;
  std::mt19937_64 rng(7);
  const auto out = apply_intensity(s.image, d, rng);
  for (std::size_t i = 0; i < out.data.size(); ++i) ASSERT_NEAR(out.data[i], s.image.data[i], 1e-6);
}

TEST(Intensity, ShiftMovesMean) {
  const auto s = labeled_sample({6, 6, 6}, 8);
  IntensityDraw d;
  d.shift = 0.5;
  std::mt19937_64 rng(9);
  EXPECT_NEAR(mean(apply_intensity(s.image, d, rng).data), mean(s.image.data) + 0.5, 1e-6);
}

TEST(Intensity, SmoothingPreservesConstant) {
  prep::MultiChannelVolume c(testutil::grid(7, 7, 7), {"DWI"}, 2.0f);
  for (float v : gaussian_smooth(c, 1.2).data) ASSERT_NEAR(v, 2.0f, 1e-5);
}

TEST(Augment, AllDisabledIsIdentity) {
  const auto s = labeled_sample({6, 5, 4}, 10);
  std::mt19937_64 rng(11);
  const auto out = augment(s, AugmentConfig::none(), rng);
  EXPECT_EQ(out.image.data, s.image.data);
  EXPECT_EQ(out.mask->labels, s.mask->labels);
}

TEST(Augment, SameSeedIsBitIdentical) {
  const auto s = labeled_sample({8, 8, 8}, 12);
  AugmentConfig cfg;
  cfg.affine_prob = 1.0;
  cfg.smooth_prob = cfg.noise_prob = 1.0;
  std::mt19937_64 a(13), b(13);
  const auto x = augment(s, cfg, a);
  const auto y = augment(s, cfg, b);
  EXPECT_EQ(x.image.data, y.image.data);
  EXPECT_EQ(x.mask->labels, y.mask->labels);
}

TEST(Augment, MaskStaysBinaryAndShapePreserved) {
  const auto s = labeled_sample({10, 9, 8}, 14);
  AugmentConfig cfg;
  cfg.affine_prob = 0.7;
  std::mt19937_64 rng(15);
  for (int t = 0; t < 100; ++t) {
    const auto out = augment(s, cfg, rng);
    ASSERT_EQ(out.image.dims(), s.image.dims());
    ASSERT_EQ(out.mask->dims(), s.mask->dims());
    for (auto v : out.mask->labels) ASSERT_LE(v, 1);
  }
}

TEST(Augment, ConfigValidation) {
  AugmentConfig cfg;
  cfg.noise_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = AugmentConfig{};
  cfg.intensity_scale = {1.2, 0.8};
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_NO_THROW(AugmentConfig::none().validate());
}
