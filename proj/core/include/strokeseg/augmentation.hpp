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

#include "strokeseg/preprocessing.hpp"

#include <array>
#include <optional>
#include <random>

namespace strokeseg::aug {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct AugmentConfig {
  double flip_prob_per_axis = 0.5;
  double affine_prob = 0.2;
  double rot_range_deg = 15.0;
  double scale_range = 0.1;
  double smooth_prob = 0.2;
  Range smooth_sigma{0.5, 1.5};
  double noise_prob = 0.2;
  Range noise_std{0.01, 0.1};
  double intensity_scale_prob = 0.3;
  Range intensity_scale{0.9, 1.1};
  double intensity_shift_prob = 0.3;
  Range intensity_shift{-0.1, 0.1};

  void validate() const;
  /// Every transform disabled.
  static AugmentConfig none();
};

/// Image patch with its (optional) aligned mask.
struct Sample {
  prep::MultiChannelVolume image;
  std::optional<SegmentationMask> mask;
};

/// One sampled rotation + per-axis scale about the grid centre.
struct SpatialTransform {
  Vec3 rotation_deg = Vec3::Zero();  // about x, then y, then z
  Vec3 scale = Vec3::Ones();

  /// Forward matrix R * S mapping source offsets (from centre) to output offsets.
  Mat3 forward() const;
  /// Source voxel coordinate sampled for output voxel `p`.
  Vec3 source_of(const Vec3& p, const Extent3& dims) const;
};

struct IntensityDraw {
  std::optional<double> smooth_sigma;
  std::optional<double> noise_std;
  std::optional<double> scale;
  std::optional<double> shift;
};

// Deterministic building blocks.
Sample flip(Sample s, const std::array<bool, 3>& axes);
/// Image trilinear, mask nearest; voxels mapped from outside the grid become 0.
Sample apply_spatial(Sample s, const SpatialTransform& t);
prep::MultiChannelVolume gaussian_smooth(prep::MultiChannelVolume img, double sigma);
prep::MultiChannelVolume apply_intensity(prep::MultiChannelVolume img, const IntensityDraw& d, std::mt19937_64& rng);

// Draws.
std::array<bool, 3> draw_flip(const AugmentConfig& cfg, std::mt19937_64& rng);
std::optional<SpatialTransform> draw_spatial(const AugmentConfig& cfg, std::mt19937_64& rng);
IntensityDraw draw_intensity(const AugmentConfig& cfg, std::mt19937_64& rng);

// Random transforms. Each consumes the rng in a fixed pattern.
Sample random_flip(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng);
Sample random_affine(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng);
/// Smoothing, noise, scale, shift in that order. The mask is not touched.
prep::MultiChannelVolume random_intensity(prep::MultiChannelVolume img, const AugmentConfig& cfg,
                                          std::mt19937_64& rng);

/// flip -> affine -> intensity.
Sample augment(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace strokeseg::aug
