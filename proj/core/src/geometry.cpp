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

#include "strokeseg/geometry.hpp"

#include "strokeseg/errors.hpp"

#include <cmath>

namespace strokeseg {

std::string to_string(const Extent3& e) {
  return std::to_string(e.x) + "x" + std::to_string(e.y) + "x" + std::to_string(e.z);
}

void Geometry::validate() const {
  if (!dims.positive()) {
    throw ValidationError("grid dims must all be >= 1, got " + to_string(dims));
  }
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw ValidationError("spacing must be positive and finite on every axis");
    }
  }
  const Mat3 gram = direction.transpose() * direction;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw ValidationError("direction matrix is not orthonormal");
  }
}

bool same_grid(const Geometry& a, const Geometry& b, double tol) {
  if (!(a.dims == b.dims)) return false;
  if ((a.spacing - b.spacing).cwiseAbs().maxCoeff() > tol) return false;
  if ((a.origin - b.origin).cwiseAbs().maxCoeff() > tol) return false;
  return (a.direction - b.direction).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace strokeseg
