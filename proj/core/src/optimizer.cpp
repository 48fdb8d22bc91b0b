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

#include "strokeseg/optimizer.hpp"

#include "strokeseg/errors.hpp"

#include <cmath>

namespace strokeseg::nn {

template <typename T>
void AdamW<T>::step(const std::vector<Parameter<T>*>& params, double lr, double grad_scale) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const double decay = 1.0 - lr * cfg_.weight_decay;
  for (Parameter<T>* p : params) {
    Moments& s = state_[p->name];
    if (s.m.size() != p->numel()) {
      if (!s.m.empty()) throw ShapeError("optimizer state for '" + p->name + "' has the wrong size");
      s.m.assign(p->numel(), 0.0);
      s.v.assign(p->numel(), 0.0);
    }
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double g = static_cast<double>(p->grad[i]) * grad_scale;
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      double w = static_cast<double>(p->value[i]) * decay;
      w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p->value[i] = static_cast<T>(w);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace strokeseg::nn
