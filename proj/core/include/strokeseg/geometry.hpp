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

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>

namespace strokeseg {

/// Voxel counts along (x, y, z). x varies fastest in every linear layout.
struct Extent3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  constexpr std::int64_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  constexpr std::int64_t& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

  constexpr std::int64_t voxels() const { return x * y * z; }
  constexpr std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i + x * (j + y * k);
  }
  constexpr bool positive() const { return x > 0 && y > 0 && z > 0; }

  friend constexpr bool operator==(const Extent3&, const Extent3&) = default;
};

std::string to_string(const Extent3& e);

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Physical placement of a voxel grid. `direction` columns are unit voxel axes
/// expressed in world (RAS, mm) coordinates; world = origin + direction * diag(spacing) * index.
struct Geometry {
  Extent3 dims;
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  Mat3 direction = Mat3::Identity();

  Mat3 affine_linear() const { return direction * spacing.asDiagonal(); }
  Vec3 index_to_world(const Vec3& index) const { return origin + affine_linear() * index; }

  /// Throws ValidationError when spacing, dims or direction are unusable.
  void validate() const;
};

/// True when both grids have equal dims and geometry agrees within `tol` (mm / unitless).
bool same_grid(const Geometry& a, const Geometry& b, double tol);

}  // namespace strokeseg
