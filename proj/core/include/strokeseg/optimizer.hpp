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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace strokeseg::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam with decoupled weight decay. Each step first shrinks the parameter by
/// (1 - lr * weight_decay), then applies the bias-corrected Adam update.
/// Moments are kept in double regardless of the parameter type.
template <typename T>
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Gradients are multiplied by `grad_scale` before use (e.g. 1 / accumulation count).
  void step(const std::vector<Parameter<T>*>& params, double lr, double grad_scale = 1.0);

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return steps_; }
  void set_step_count(std::int64_t n) { steps_ = n; }

  /// Keyed by parameter name.
  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  AdamWConfig cfg_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace strokeseg::nn
