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
#include "strokeseg/layers.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace strokeseg;
using namespace strokeseg::nn;

namespace {

// Direct seven-loop convolution with zero padding k / 2.
Tensor<double> naive_conv(const Tensor<double>& x, const Conv3d<double>& conv) {
  const auto& s = conv.spec();
  const Extent3 out = conv.output_extent(x.spatial);
  Tensor<double> y(x.batch, s.out_channels, out);
  const int p = s.kernel / 2;
  for (std::int64_t n = 0; n < x.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (std::int64_t oz = 0; oz < out.z; ++oz)
        for (std::int64_t oy = 0; oy < out.y; ++oy)
          for (std::int64_t ox = 0; ox < out.x; ++ox) {
            double acc = conv.bias ? conv.bias->value[co] : 0.0;
            for (int ci = 0; ci < s.in_channels; ++ci)
              for (int dz = 0; dz < s.kernel; ++dz)
                for (int dy = 0; dy < s.kernel; ++dy)
                  for (int dx = 0; dx < s.kernel; ++dx) {
                    const std::int64_t iz = oz * s.stride + dz - p, iy = oy * s.stride + dy - p,
                                       ix = ox * s.stride + dx - p;
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= x.spatial.z || iy >= x.spatial.y || ix >= x.spatial.x)
                      continue;
                    const auto w = conv.weight.value[(((co * s.in_channels + ci) * s.kernel + dz) * s.kernel + dy) *
                                                         s.kernel + dx];
                    acc += w * x.plane(n, ci)[x.spatial.index(ix, iy, iz)];
                  }
            y.plane(n, co)[out.index(ox, oy, oz)] = acc;
          }
  return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

struct ConvCase {
  int kernel, stride;
  bool bias;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

}  // namespace

TEST_P(ConvOracle, ForwardMatchesNaiveLoops) {
  const auto c = GetParam();
  Conv3d<double> conv("c", ConvSpec{3, 4, c.kernel, c.stride, c.bias});
  std::mt19937_64 rng(1);
  conv.init(rng);
  if (conv.bias) for (auto& b : conv.bias->value) b = std::normal_distribution<double>()(rng);
  const auto x = testutil::random_tensor<double>(2, 3, {6, 5, 4}, rng);
  const auto y = conv.forward(x);
  const auto ref = naive_conv(x, conv);
  ASSERT_TRUE(y.same_shape(ref));
  for (std::size_t i = 0; i < y.data.size(); ++i) ASSERT_NEAR(y.data[i], ref.data[i], 1e-12);
}

TEST_P(ConvOracle, BackwardIsAdjointOfForward) {
  // <conv(x), dy> is linear in x and w, so its gradients are exact adjoints.
  const auto c = GetParam();
  Conv3d<double> conv("c", ConvSpec{2, 3, c.kernel, c.stride, c.bias});
  std::mt19937_64 rng(2);
  conv.init(rng);
  auto x = testutil::random_tensor<double>(1, 2, {6, 4, 5}, rng);
  const auto dy = testutil::random_tensor<double>(1, 3, conv.output_extent(x.spatial), rng);
  const auto dx = conv.backward(x, dy);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.data.size(); i += 7) {
    const double o = x.data[i];
    x.data[i] = o + h;
    const double up = dot(conv.forward(x), dy);
    x.data[i] = o - h;
    const double down = dot(conv.forward(x), dy);
    x.data[i] = o;
    ASSERT_NEAR(dx.data[i], (up - down) / (2 * h), 1e-7);
  }
  for (std::size_t i = 0; i < conv.weight.value.size(); i += 5) {
    const double o = conv.weight.value[i];
    conv.weight.value[i] = o + h;
    const double up = dot(conv.forward(x), dy);
    conv.weight.value[i] = o - h;
    const double down = dot(conv.forward(x), dy);
    conv.weight.value[i] = o;
    ASSERT_NEAR(conv.weight.grad[i], (up - down) / (2 * h), 1e-7);
  }
  if (conv.bias) {
    for (int co = 0; co < 3; ++co) {
      double s = 0;
      for (std::int64_t v = 0; v < dy.voxels(); ++v) s += dy.plane(0, co)[v];
      EXPECT_NEAR(conv.bias->grad[co], s, 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kernels, ConvOracle,
                         ::testing::Values(ConvCase{3, 1, false}, ConvCase{3, 2, false}, ConvCase{1, 1, true},
                                           ConvCase{3, 1, true}));

TEST(Conv3d, StrideTwoHalvesEvenExtent) {
  Conv3d<float> conv("c", ConvSpec{1, 1, 3, 2, false});
  EXPECT_EQ(conv.output_extent({8, 6, 4}), (Extent3{4, 3, 2}));
}

TEST(Conv3d, WrongChannelsIsShapeError) {
  Conv3d<float> conv("c", ConvSpec{2, 1, 3, 1, false});
  EXPECT_THROW(conv.forward(Tensor<float>(1, 3, {4, 4, 4})), ShapeError);
}

TEST(Conv3d, GradientsAccumulateUntilZeroed) {
  Conv3d<double> conv("c", ConvSpec{1, 1, 1, 1, false});
  Tensor<double> x(1, 1, {2, 2, 2}, 1.0), dy(1, 1, {2, 2, 2}, 1.0);
  conv.backward(x, dy);
  conv.backward(x, dy);
  EXPECT_EQ(conv.weight.grad[0], 16.0);
  conv.weight.zero_grad();
  EXPECT_EQ(conv.weight.grad[0], 0.0);
}

TEST(InstanceNorm, OutputHasZeroMeanUnitVariancePerChannel) {
  InstanceNorm<double> norm("n", 3);
  std::mt19937_64 rng(3);
  auto x = testutil::random_tensor<double>(2, 3, {5, 4, 3}, rng, 4.0);
  for (auto& v : x.data) v += 7.0;
  const auto y = norm.forward(x);
  for (std::int64_t n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double s = 0, sq = 0;
      for (std::int64_t v = 0; v < y.voxels(); ++v) s += y.plane(n, c)[v];
      const double mean = s / y.voxels();
      for (std::int64_t v = 0; v < y.voxels(); ++v) sq += std::pow(y.plane(n, c)[v] - mean, 2);
      EXPECT_NEAR(mean, 0.0, 1e-12);
      EXPECT_NEAR(sq / y.voxels(), 1.0, 1e-5);
    }
}

TEST(InstanceNorm, BackwardMatchesCentralDifferences) {
  InstanceNorm<double> norm("n", 2);
  norm.gamma.value = {1.3, 0.7};
  norm.beta.value = {0.1, -0.2};
  std::mt19937_64 rng(4);
  auto x = testutil::random_tensor<double>(2, 2, {3, 3, 2}, rng);
  const auto dy = testutil::random_tensor<double>(2, 2, {3, 3, 2}, rng);
  NormStats stats;
  norm.forward(x, &stats);
  const auto dx = norm.backward(x, stats, dy);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double o = x.data[i];
    x.data[i] = o + h;
    const double up = dot(norm.forward(x), dy);
    x.data[i] = o - h;
    const double down = dot(norm.forward(x), dy);
    x.data[i] = o;
    ASSERT_NEAR(dx.data[i], (up - down) / (2 * h), 1e-6);
  }
  for (int c = 0; c < 2; ++c) {
    const double o = norm.gamma.value[c];
    norm.gamma.value[c] = o + h;
    const double up = dot(norm.forward(x), dy);
    norm.gamma.value[c] = o - h;
    const double down = dot(norm.forward(x), dy);
    norm.gamma.value[c] = o;
    EXPECT_NEAR(norm.gamma.grad[c], (up - down) / (2 * h), 1e-6);
  }
}

TEST(Upsample, ConstantStaysConstantAndShapeDoubles) {
  Tensor<float> x(1, 2, {3, 2, 4}, 2.5f);
  const auto y = upsample2x(x);
  EXPECT_EQ(y.spatial, (Extent3{6, 4, 8}));
  for (float v : y.data) ASSERT_FLOAT_EQ(v, 2.5f);
}

TEST(Upsample, LinearRampReproducedAwayFromEdges) {
  Tensor<double> x(1, 1, {6, 1, 1});
  for (int i = 0; i < 6; ++i) x.data[i] = i;
  const auto y = upsample2x(x);
  // Output voxel o samples input coordinate (o + 0.5) / 2 - 0.5.
  for (int o = 1; o < 11; ++o) EXPECT_NEAR(y.data[o], (o + 0.5) / 2 - 0.5, 1e-12);
  EXPECT_EQ(y.data[0], 0.0);
  EXPECT_EQ(y.data[11], 5.0);
}

TEST(Upsample, BackwardIsAdjoint) {
  std::mt19937_64 rng(5);
  const auto x = testutil::random_tensor<double>(1, 2, {3, 4, 2}, rng);
  const auto dy = testutil::random_tensor<double>(1, 2, {6, 8, 4}, rng);
  const auto dx = upsample2x_backward(dy, x.spatial);
  EXPECT_NEAR(dot(upsample2x(x), dy), dot(x, dx), 1e-10);
}

TEST(Softmax, SumsToOneAndIsStableForLargeLogits) {
  Tensor<double> l(1, 3, {2, 1, 1});
  l.data = {1000, 0, 1000, 0, -5, 0};
  const auto p = softmax_channels(l);
  for (int v = 0; v < 2; ++v) {
    const double s = p.plane(0, 0)[v] + p.plane(0, 1)[v] + p.plane(0, 2)[v];
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (int c = 0; c < 3; ++c) EXPECT_TRUE(std::isfinite(p.plane(0, c)[v]));
  }
  EXPECT_NEAR(p.plane(0, 0)[0], 0.5, 1e-12);
  EXPECT_NEAR(p.plane(0, 1)[0], 0.5, 1e-12);
  EXPECT_NEAR(p.plane(0, 2)[1], 1.0 / 3.0, 1e-12);
}

TEST(Relu, BackwardMasksNonPositiveOutputs) {
  Tensor<float> x(1, 1, {4, 1, 1});
  x.data = {-1, 0, 2, 3};
  relu_inplace(x);
  EXPECT_EQ(x.data, (std::vector<float>{0, 0, 2, 3}));
  Tensor<float> dy(1, 1, {4, 1, 1}, 1.0f);
  relu_backward_inplace(x, dy);
  EXPECT_EQ(dy.data, (std::vector<float>{0, 0, 1, 1}));
}
