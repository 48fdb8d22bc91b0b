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

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace strokeseg::prep {

enum class Interp { Trilinear, Nearest };

/// Channel-stacked volumes on one shared grid. Layout: [channel][z][y][x].
struct MultiChannelVolume {
  Geometry geom;
  std::vector<std::string> channel_names;
  std::vector<float> data;

  MultiChannelVolume() = default;
  MultiChannelVolume(const Geometry& g, std::vector<std::string> names, float fill = 0.0f);

  int channels() const { return static_cast<int>(channel_names.size()); }
  const Extent3& dims() const { return geom.dims; }
  std::span<float> channel(int c);
  std::span<const float> channel(int c) const;
};

struct CropSpec {
  Extent3 size{192, 192, 128};
  double foreground_bias = 0.75;

  void validate() const;
};

enum class NormRegion { All, NonZero };

/// Voxels added on each side by pad_to_min. Cropping `before` .. `before + original`
/// restores the input.
struct PadRecord {
  Extent3 before;
  Extent3 after;
  Extent3 original;

  bool empty() const { return before == Extent3{} && after == Extent3{}; }
};

/// Resamples onto a grid with the same origin and direction and new spacing.
/// Output dims are ceil(n * spacing / target); positions past the last input
/// sample clamp to the border. Identical spacing returns an exact copy.
ImageVolume resample(const ImageVolume& vol, const Vec3& target_spacing, Interp mode);
SegmentationMask resample(const SegmentationMask& mask, const Vec3& target_spacing);

/// Nearest-neighbour resampling of a mask onto an arbitrary target grid
/// (world-coordinate mapping). Samples outside the source become 0.
SegmentationMask resample_onto(const SegmentationMask& mask, const Geometry& target);

/// Stacks volumes as channels. Throws AlignmentError when dims differ or
/// geometry disagrees by more than 1e-4 mm.
MultiChannelVolume stack_channels(std::span<const ImageVolume> vols);

/// Per-channel zero-mean / unit-std scaling. Channels whose std is below 1e-8
/// become all zeros. With NormRegion::NonZero the statistics use nonzero voxels
/// only and zero voxels stay zero.
MultiChannelVolume normalize(MultiChannelVolume vol, NormRegion region = NormRegion::All);

/// Pads every axis up to `min_size` (symmetric, extra voxel on the high side).
std::pair<MultiChannelVolume, PadRecord> pad_to_min(const MultiChannelVolume& vol, const Extent3& min_size,
                                                    float fill);
std::pair<SegmentationMask, PadRecord> pad_to_min(const SegmentationMask& mask, const Extent3& min_size,
                                                  std::uint8_t fill = 0);
MultiChannelVolume unpad(const MultiChannelVolume& vol, const PadRecord& record);
SegmentationMask unpad(const SegmentationMask& mask, const PadRecord& record);

/// Extracts the box [offset, offset + size). The origin follows the box.
MultiChannelVolume crop(const MultiChannelVolume& vol, const Extent3& offset, const Extent3& size);
SegmentationMask crop(const SegmentationMask& mask, const Extent3& offset, const Extent3& size);

struct CropResult {
  MultiChannelVolume image;
  std::optional<SegmentationMask> mask;
  Extent3 offset;
};

/// Random crop of spec.size. With probability spec.foreground_bias (and a mask
/// that has foreground) the crop is centred on a uniformly chosen lesion voxel,
/// otherwise the offset is uniform over all valid positions.
/// Throws PreconditionError when the volume is smaller than the crop.
CropResult sample_crop(const MultiChannelVolume& vol, const SegmentationMask* mask, const CropSpec& spec,
                       std::mt19937_64& rng);

/// Grid bookkeeping needed to bring predictions back to the DWI grid.
struct NativeGeometry {
  Geometry native;     // DWI grid as loaded
  Geometry resampled;  // working grid fed to the network
};

struct PreprocessOptions {
  Vec3 target_spacing = Vec3::Ones();
  NormRegion norm_region = NormRegion::All;
};

struct PreprocessedCase {
  std::string case_id;
  MultiChannelVolume image;
  std::optional<SegmentationMask> mask;
  NativeGeometry native;
};

/// load -> resample (trilinear images, nearest mask) -> stack [DWI, ADC] -> normalize.
PreprocessedCase preprocess_case(const io::CaseRecord& record, const PreprocessOptions& options = {});

}  // namespace strokeseg::prep
