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

#include "strokeseg/segresnet.hpp"

#include <cstdint>
#include <vector>

namespace strokeseg::loss {

struct LossConfig {
  double focal_gamma = 2.0;
  double dice_smooth = 1e-5;
  bool include_background = false;
  /// Sum Dice statistics over the whole batch before forming the ratio.
  bool dice_batch = true;
  /// Number of deep-supervision terms (main output + heads).
  int num_ds_levels = 4;
  /// Clamp for the true-class probability inside the focal log.
  double focal_eps = 1e-7;

  void validate() const;
};

/// Integer class labels for a batch, layout [n][z][y][x].
struct LabelBatch {
  std::int64_t batch = 0;
  Extent3 spatial;
  std::vector<std::uint8_t> labels;

  LabelBatch() = default;
  LabelBatch(std::int64_t n, const Extent3& s, std::uint8_t fill = 0)
      : batch(n), spatial(s), labels(static_cast<std::size_t>(n * s.voxels()), fill) {}
};

/// Coefficient of deep-supervision term i: 2^-i.
double level_weight(int level);

/// Nearest-neighbour subsampling by an integer power-of-two factor
/// (out[i] = in[i * factor]). Throws ShapeError on indivisible dims.
LabelBatch downsize_target(const LabelBatch& target, int factor);

/// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s), averaged over included
/// classes (and samples when dice_batch is false). Optional gradient w.r.t.
/// the probabilities is written (not accumulated) into `grad`.
template <typename T>
double soft_dice_loss(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg,
                      nn::Tensor<T>* grad = nullptr);

/// Mean over voxels of -(1 - p_t)^gamma log(p_t), p_t clamped to [eps, 1 - eps].
template <typename T>
double focal_loss(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg,
                  nn::Tensor<T>* grad = nullptr);

/// soft_dice_loss + focal_loss of softmax(logits); gradient is w.r.t. logits.
template <typename T>
double combined_loss(const nn::Tensor<T>& logits, const LabelBatch& target, const LossConfig& cfg,
                     nn::Tensor<T>* grad_logits = nullptr);

/// sum_i 2^-i * combined_loss(outputs[i], downsize_target(target, 2^i)).
/// Throws ShapeError when outputs.size() != cfg.num_ds_levels.
template <typename T>
double deep_supervision_loss(const nn::DeepSupervisionOutput<T>& outputs, const LabelBatch& target,
                             const LossConfig& cfg, nn::DeepSupervisionOutput<T>* grads = nullptr);

}  // namespace strokeseg::loss
