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

#include "strokeseg/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace strokeseg {

enum class Modality { DWI, ADC, FLAIR, OTHER };

std::string to_string(Modality m);

/// One scalar MRI volume. Samples are kept in double so any on-disk type
/// (up to float64 / int32) is represented exactly.
struct ImageVolume {
  Geometry geom;
  std::vector<double> data;
  Modality modality = Modality::OTHER;

  ImageVolume() = default;
  explicit ImageVolume(const Geometry& g, double fill = 0.0, Modality m = Modality::OTHER)
      : geom(g), data(static_cast<std::size_t>(g.dims.voxels()), fill), modality(m) {}

  const Extent3& dims() const { return geom.dims; }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data[geom.dims.index(i, j, k)]; }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const { return data[geom.dims.index(i, j, k)]; }
};

/// Binary label grid. Values are 0 (background) or 1 (lesion).
struct SegmentationMask {
  Geometry geom;
  std::vector<std::uint8_t> labels;

  SegmentationMask() = default;
  explicit SegmentationMask(const Geometry& g, std::uint8_t fill = 0)
      : geom(g), labels(static_cast<std::size_t>(g.dims.voxels()), fill) {}

  const Extent3& dims() const { return geom.dims; }
  std::uint8_t& at(std::int64_t i, std::int64_t j, std::int64_t k) { return labels[geom.dims.index(i, j, k)]; }
  std::uint8_t at(std::int64_t i, std::int64_t j, std::int64_t k) const { return labels[geom.dims.index(i, j, k)]; }

  std::int64_t foreground_count() const;
};

}  // namespace strokeseg
