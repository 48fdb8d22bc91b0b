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

#include "strokeseg/tensor.hpp"

#include <optional>
#include <random>
#include <vector>

namespace strokeseg::nn {

// Layers are stateless with respect to activations: forward() returns its
// output and backward() receives whatever input the caller kept. Parameter
// gradients accumulate (+=) until zero_grad().

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;  // 1 or 3, padding kernel / 2
  int stride = 1;  // 1 or 2
  bool bias = false;
};

template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, const ConvSpec& spec);

  const ConvSpec& spec() const { return spec_; }
  Extent3 output_extent(const Extent3& in) const;

  Tensor<T> forward(const Tensor<T>& x) const;
  /// Returns dL/dx; adds into weight/bias gradients.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy);

  /// He (fan-in) normal weights, zero bias.
  void init(std::mt19937_64& rng);

  Parameter<T> weight;  // [out][in][k][k][k]
  std::optional<Parameter<T>> bias;

 private:
  ConvSpec spec_;
};

struct NormStats {
  std::vector<double> mean;    // [n * c]
  std::vector<double> invstd;  // [n * c]
};

/// Per-sample, per-channel normalization over the spatial grid with an affine
/// scale/shift per channel.
template <typename T>
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(const std::string& name, int channels, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, NormStats* stats = nullptr) const;
  Tensor<T> backward(const Tensor<T>& x, const NormStats& stats, const Tensor<T>& dy);

  Parameter<T> gamma;
  Parameter<T> beta;

 private:
  double eps_ = 1e-5;
};

template <typename T>
void relu_inplace(Tensor<T>& x);
/// dy is masked where the activation output `y` is not positive.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

/// Trilinear x2 upsampling (half-pixel centres, edge clamped).
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy, const Extent3& input_extent);

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

/// Channel softmax at every voxel.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

}  // namespace strokeseg::nn
