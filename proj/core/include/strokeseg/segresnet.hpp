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

#include "strokeseg/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace strokeseg::nn {

struct NetworkConfig {
  int in_channels = 2;
  int out_channels = 2;
  int init_filters = 32;
  std::vector<int> blocks_down{2, 4, 4, 4, 4};
  std::vector<int> blocks_up{1, 1, 1, 1};
  int ds_heads = 3;

  void validate() const;
  int levels() const { return static_cast<int>(blocks_down.size()); }
  int width(int level) const { return init_filters << level; }
  /// Every spatial input dim must be a multiple of this.
  std::int64_t divisor() const { return std::int64_t{1} << (levels() - 1); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ParameterInfo {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// Logit maps; index i is at spatial scale 1 / 2^i.
template <typename T>
using DeepSupervisionOutput = std::vector<Tensor<T>>;

enum class Mode { Eval, Train };

/// Encoder-decoder with pre-activation residual blocks, instance
/// normalization, additive skips and deep-supervision heads.
///
/// Encoder level s (width init_filters * 2^s) holds blocks_down[s] residual
/// blocks; levels are joined by stride-2 3x3x3 convolutions. Each decoder
/// step reduces width with a 1x1x1 conv, upsamples x2 trilinearly, adds the
/// encoder skip and runs blocks_up[j] residual blocks. The main head is a
/// 1x1x1 conv at full resolution; `ds_heads` extra 1x1x1 heads sit on the
/// next coarser decoder levels.
template <typename T>
class SegResNet {
 public:
  explicit SegResNet(const NetworkConfig& cfg, std::uint64_t seed = 0);

  const NetworkConfig& config() const { return cfg_; }

  /// Throws ShapeError naming the axis when the input cannot be processed.
  DeepSupervisionOutput<T> forward(const Tensor<T>& x, Mode mode = Mode::Eval);
  /// Backpropagates logit gradients of the last Train-mode forward. Returns dL/dx.
  Tensor<T> backward(const DeepSupervisionOutput<T>& grad_logits);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<ParameterInfo> inventory() const;
  std::int64_t parameter_count() const;
  void zero_grad();
  void reinitialize(std::uint64_t seed);

  /// Shapes forward() would produce, without computing anything.
  std::vector<Extent3> output_extents(const Extent3& input) const;
  std::vector<int> encoder_widths() const;

  /// Drops activations kept for backward.
  void release_cache();

 private:
  struct ResBlock {
    InstanceNorm<T> norm1, norm2;
    Conv3d<T> conv1, conv2;
    // Train-mode cache.
    Tensor<T> in, act1, h1, act2;
    NormStats stats1, stats2;
  };
  struct EncoderLevel {
    std::optional<Conv3d<T>> down;
    std::vector<ResBlock> blocks;
    Tensor<T> down_in;
  };
  struct DecoderLevel {
    int level = 0;  // resolution level this step outputs
    Conv3d<T> reduce;
    std::vector<ResBlock> blocks;
    Tensor<T> reduce_in;
    Extent3 reduced_extent;
  };
  struct Head {
    int level = 0;
    Conv3d<T> conv;
    Tensor<T> in;
  };

  ResBlock make_block(const std::string& name, int width);
  Tensor<T> block_forward(ResBlock& b, Tensor<T> x, bool train);
  Tensor<T> block_backward(ResBlock& b, Tensor<T> dy);
  void check_input(const Tensor<T>& x) const;

  NetworkConfig cfg_;
  Conv3d<T> stem_;
  Tensor<T> stem_in_;
  std::vector<EncoderLevel> encoder_;
  std::vector<DecoderLevel> decoder_;
  std::vector<Head> heads_;  // heads_[i] produces logits[i]
  bool cached_ = false;
};

extern template class SegResNet<float>;
extern template class SegResNet<double>;

}  // namespace strokeseg::nn
