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
#include "strokeseg/segresnet.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace strokeseg::infer {

/// Per-class probabilities on the working grid. Layout [class][z][y][x].
struct ProbabilityMap {
  Geometry geom;
  int classes = 0;
  std::vector<float> probs;

  ProbabilityMap() = default;
  ProbabilityMap(const Geometry& g, int c) : geom(g), classes(c), probs(static_cast<std::size_t>(c * g.dims.voxels())) {}

  std::span<float> channel(int c) { return {probs.data() + c * geom.dims.voxels(), static_cast<std::size_t>(geom.dims.voxels())}; }
  std::span<const float> channel(int c) const {
    return {probs.data() + c * geom.dims.voxels(), static_cast<std::size_t>(geom.dims.voxels())};
  }
};

struct SlidingWindowOptions {
  Extent3 window{192, 192, 128};
  double overlap = 0.5;
  /// Gaussian blend sigma as a fraction of the window size per axis.
  double sigma_scale = 0.125;

  void validate() const;
};

/// Window start offsets along one axis: stride window * (1 - overlap)
/// (at least 1), last window flush with the end. Requires dim >= window.
std::vector<std::int64_t> window_starts(std::int64_t dim, std::int64_t window, double overlap);

/// Centre-peaked separable Gaussian weights over one window, max 1.
std::vector<double> importance_weights(const Extent3& window, double sigma_scale);

/// Softmax probabilities over the whole volume. The volume is zero-padded up
/// to the window where needed; a volume exactly the window size takes a
/// single forward pass with no blending.
template <typename T>
ProbabilityMap sliding_window_predict(nn::SegResNet<T>& net, const prep::MultiChannelVolume& vol,
                                      const SlidingWindowOptions& opts);

/// Element-wise arithmetic mean, accumulated in double in list order.
ProbabilityMap mean_map(std::span<const ProbabilityMap> maps);

struct EnsembleSpec {
  std::vector<std::filesystem::path> checkpoint_paths;
  nn::NetworkConfig expected;

  void validate() const;
};

/// Every member loaded strictly up front, so an incompatible checkpoint fails
/// before any inference runs.
class Ensemble {
 public:
  explicit Ensemble(const EnsembleSpec& spec);
  explicit Ensemble(std::vector<std::unique_ptr<nn::SegResNet<float>>> models);

  std::size_t size() const { return models_.size(); }
  ProbabilityMap predict(const prep::MultiChannelVolume& vol, const SlidingWindowOptions& opts);

 private:
  std::vector<std::unique_ptr<nn::SegResNet<float>>> models_;
};

ProbabilityMap ensemble_predict(const EnsembleSpec& spec, const prep::MultiChannelVolume& vol,
                                const SlidingWindowOptions& opts);

/// Argmax over classes; ties resolve to the lower class index (background).
SegmentationMask binarize(const ProbabilityMap& pm);

/// Foreground (class 1) probability as a scalar volume for export.
ImageVolume foreground_probability(const ProbabilityMap& pm);

/// Nearest-neighbour resample from the working grid back onto the native DWI
/// grid. Throws ShapeError when `mask` is not on `record.resampled`.
SegmentationMask restore_native(const SegmentationMask& mask, const prep::NativeGeometry& record);

}  // namespace strokeseg::infer
