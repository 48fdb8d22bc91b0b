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

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace strokeseg::nn {

/// Dense batch of channel-stacked 3D grids. Layout [n][c][z][y][x].
template <typename T>
struct Tensor {
  std::int64_t batch = 0;
  std::int64_t channels = 0;
  Extent3 spatial;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::int64_t n, std::int64_t c, const Extent3& s, T fill = T(0))
      : batch(n), channels(c), spatial(s), data(static_cast<std::size_t>(n * c * s.voxels()), fill) {}

  std::int64_t voxels() const { return spatial.voxels(); }
  std::size_t size() const { return data.size(); }

  T* plane(std::int64_t n, std::int64_t c) { return data.data() + (n * channels + c) * voxels(); }
  const T* plane(std::int64_t n, std::int64_t c) const { return data.data() + (n * channels + c) * voxels(); }
  T* sample(std::int64_t n) { return data.data() + n * channels * voxels(); }
  const T* sample(std::int64_t n) const { return data.data() + n * channels * voxels(); }

  bool same_shape(const Tensor& o) const {
    return batch == o.batch && channels == o.channels && spatial == o.spatial;
  }
  std::string shape_string() const {
    return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " + to_string(spatial) + ")";
  }
};

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::int64_t> s);

  std::size_t numel() const { return value.size(); }
  void zero_grad();
};

template <typename T>
Parameter<T>::Parameter(std::string n, std::vector<std::int64_t> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (auto d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void Parameter<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

}  // namespace strokeseg::nn
