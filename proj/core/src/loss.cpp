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

#include "strokeseg/loss.hpp"

#include "strokeseg/errors.hpp"

#include <cmath>

namespace strokeseg::loss {

namespace {

template <typename T>
void check_inputs(const nn::Tensor<T>& probs, const LabelBatch& target) {
  if (probs.batch != target.batch || !(probs.spatial == target.spatial)) {
    throw ShapeError("prediction " + probs.shape_string() + " and target (" + std::to_string(target.batch) + ", " +
                     to_string(target.spatial) + ") do not match");
  }
  if (probs.channels < 2) throw ShapeError("loss needs at least two class channels");
  for (std::uint8_t l : target.labels) {
    if (l >= probs.channels) throw ShapeError("target label " + std::to_string(l) + " exceeds class count");
  }
}

template <typename T>
void check_simplex(const nn::Tensor<T>& probs) {
  const std::int64_t v = probs.voxels();
  for (std::int64_t n = 0; n < probs.batch; ++n) {
    const T* p = probs.sample(n);
    for (std::int64_t i = 0; i < v; ++i) {
      double s = 0.0;
      for (std::int64_t c = 0; c < probs.channels; ++c) s += p[c * v + i];
      if (std::abs(s - 1.0) > 1e-4) throw PreconditionError("probabilities do not sum to 1 at every voxel");
    }
  }
}

template <typename T>
double dice_impl(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg, nn::Tensor<T>* grad) {
  const std::int64_t v = probs.voxels();
  const std::int64_t first = cfg.include_background ? 0 : 1;
  const std::int64_t classes = probs.channels;
  const std::int64_t groups_per_class = cfg.dice_batch ? 1 : probs.batch;
  const std::int64_t n_groups = (classes - first) * groups_per_class;
  const double s = cfg.dice_smooth;
  if (grad) *grad = nn::Tensor<T>(probs.batch, probs.channels, probs.spatial);

  double total = 0.0;
  for (std::int64_t c = first; c < classes; ++c) {
    for (std::int64_t g = 0; g < groups_per_class; ++g) {
      const std::int64_t n_begin = cfg.dice_batch ? 0 : g;
      const std::int64_t n_end = cfg.dice_batch ? probs.batch : g + 1;
      double inter = 0.0, psum = 0.0, tsum = 0.0;
      for (std::int64_t n = n_begin; n < n_end; ++n) {
        const T* p = probs.plane(n, c);
        const std::uint8_t* t = target.labels.data() + n * v;
        for (std::int64_t i = 0; i < v; ++i) {
          const double tv = t[i] == c ? 1.0 : 0.0;
          inter += p[i] * tv;
          psum += p[i];
          tsum += tv;
        }
      }
      const double num = 2.0 * inter + s;
      const double den = psum + tsum + s;
      total += 1.0 - num / den;
      if (grad) {
        const double inv = 1.0 / (den * den * static_cast<double>(n_groups));
        for (std::int64_t n = n_begin; n < n_end; ++n) {
          T* gp = grad->plane(n, c);
          const std::uint8_t* t = target.labels.data() + n * v;
          for (std::int64_t i = 0; i < v; ++i) {
            const double tv = t[i] == c ? 1.0 : 0.0;
            gp[i] = static_cast<T>(-(2.0 * tv * den - num) * inv);
          }
        }
      }
    }
  }
  return total / static_cast<double>(n_groups);
}

template <typename T>
double focal_impl(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg, nn::Tensor<T>* grad) {
  const std::int64_t v = probs.voxels();
  const double count = static_cast<double>(probs.batch * v);
  const double gamma = cfg.focal_gamma;
  const double eps = cfg.focal_eps;
  if (grad) *grad = nn::Tensor<T>(probs.batch, probs.channels, probs.spatial);
  double total = 0.0;
  for (std::int64_t n = 0; n < probs.batch; ++n) {
    const std::uint8_t* t = target.labels.data() + n * v;
    for (std::int64_t i = 0; i < v; ++i) {
      const std::int64_t c = t[i];
      const double raw = probs.plane(n, c)[i];
      const double pt = std::clamp(raw, eps, 1.0 - eps);
      const double q = 1.0 - pt;
      const double logp = std::log(pt);
      const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
      total += -mod * logp;
      if (grad) {
        double d = 0.0;
        if (raw > eps && raw < 1.0 - eps) {
          const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
          d = dmod * logp - mod / pt;
        }
        grad->plane(n, c)[i] = static_cast<T>(d / count);
      }
    }
  }
  return total / count;
}

// dL/dz from dL/dp through the channel softmax.
template <typename T>
nn::Tensor<T> softmax_backward(const nn::Tensor<T>& probs, const nn::Tensor<T>& grad_probs) {
  nn::Tensor<T> gz(probs.batch, probs.channels, probs.spatial);
  const std::int64_t v = probs.voxels();
  for (std::int64_t n = 0; n < probs.batch; ++n) {
    const T* p = probs.sample(n);
    const T* g = grad_probs.sample(n);
    T* out = gz.sample(n);
    for (std::int64_t i = 0; i < v; ++i) {
      double dot = 0.0;
      for (std::int64_t c = 0; c < probs.channels; ++c) dot += static_cast<double>(g[c * v + i]) * p[c * v + i];
      for (std::int64_t c = 0; c < probs.channels; ++c) {
        out[c * v + i] = static_cast<T>(p[c * v + i] * (g[c * v + i] - dot));
      }
    }
  }
  return gz;
}

}  // namespace

void LossConfig::validate() const {
  if (!(focal_gamma >= 0.0)) throw ValidationError("focal_gamma must be >= 0");
  if (!(dice_smooth > 0.0)) throw ValidationError("dice_smooth must be > 0");
  if (num_ds_levels < 1) throw ValidationError("num_ds_levels must be >= 1");
  if (!(focal_eps > 0.0 && focal_eps < 0.5)) throw ValidationError("focal_eps must lie in (0, 0.5)");
}

double level_weight(int level) { return std::ldexp(1.0, -level); }

LabelBatch downsize_target(const LabelBatch& target, int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0) throw ShapeError("downsize factor must be a power of two");
  if (factor == 1) return target;
  for (int a = 0; a < 3; ++a) {
    if (target.spatial[a] % factor != 0) {
      throw ShapeError("target size " + to_string(target.spatial) + " is not divisible by " + std::to_string(factor));
    }
  }
  const Extent3 out{target.spatial.x / factor, target.spatial.y / factor, target.spatial.z / factor};
  LabelBatch res(target.batch, out);
  const std::int64_t vin = target.spatial.voxels();
  std::size_t o = 0;
  for (std::int64_t n = 0; n < target.batch; ++n) {
    const std::uint8_t* src = target.labels.data() + n * vin;
    for (std::int64_t k = 0; k < out.z; ++k) {
      for (std::int64_t j = 0; j < out.y; ++j) {
        for (std::int64_t i = 0; i < out.x; ++i) {
          res.labels[o++] = src[target.spatial.index(i * factor, j * factor, k * factor)];
        }
      }
    }
  }
  return res;
}

template <typename T>
double soft_dice_loss(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg,
                      nn::Tensor<T>* grad) {
  cfg.validate();
  check_inputs(probs, target);
  check_simplex(probs);
  return dice_impl(probs, target, cfg, grad);
}

template <typename T>
double focal_loss(const nn::Tensor<T>& probs, const LabelBatch& target, const LossConfig& cfg, nn::Tensor<T>* grad) {
  cfg.validate();
  check_inputs(probs, target);
  check_simplex(probs);
  return focal_impl(probs, target, cfg, grad);
}

template <typename T>
double combined_loss(const nn::Tensor<T>& logits, const LabelBatch& target, const LossConfig& cfg,
                     nn::Tensor<T>* grad_logits) {
  check_inputs(logits, target);
  const nn::Tensor<T> probs = nn::softmax_channels(logits);
  if (!grad_logits) return dice_impl<T>(probs, target, cfg, nullptr) + focal_impl<T>(probs, target, cfg, nullptr);
  nn::Tensor<T> gd, gf;
  const double value = dice_impl(probs, target, cfg, &gd) + focal_impl(probs, target, cfg, &gf);
  add_inplace(gd, gf);
  *grad_logits = softmax_backward(probs, gd);
  return value;
}

template <typename T>
double deep_supervision_loss(const nn::DeepSupervisionOutput<T>& outputs, const LabelBatch& target,
                             const LossConfig& cfg, nn::DeepSupervisionOutput<T>* grads) {
  cfg.validate();
  if (static_cast<int>(outputs.size()) != cfg.num_ds_levels) {
    throw ShapeError("deep supervision expects " + std::to_string(cfg.num_ds_levels) + " outputs, got " +
                     std::to_string(outputs.size()));
  }
  if (grads) grads->assign(outputs.size(), nn::Tensor<T>());
  double total = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const int level = static_cast<int>(i);
    const LabelBatch small = downsize_target(target, 1 << level);
    const double w = level_weight(level);
    if (grads) {
      nn::Tensor<T>& g = (*grads)[i];
      total += w * combined_loss(outputs[i], small, cfg, &g);
      for (T& x : g.data) x = static_cast<T>(x * w);
    } else {
      total += w * combined_loss<T>(outputs[i], small, cfg, nullptr);
    }
  }
  return total;
}

#define STROKESEG_INSTANTIATE(T)                                                                               \
  template double soft_dice_loss<T>(const nn::Tensor<T>&, const LabelBatch&, const LossConfig&, nn::Tensor<T>*); \
  template double focal_loss<T>(const nn::Tensor<T>&, const LabelBatch&, const LossConfig&, nn::Tensor<T>*);     \
  template double combined_loss<T>(const nn::Tensor<T>&, const LabelBatch&, const LossConfig&, nn::Tensor<T>*);  \
  template double deep_supervision_loss<T>(const nn::DeepSupervisionOutput<T>&, const LabelBatch&,             \
                                           const LossConfig&, nn::DeepSupervisionOutput<T>*);

STROKESEG_INSTANTIATE(float)
STROKESEG_INSTANTIATE(double)

#undef STROKESEG_INSTANTIATE

}  // namespace strokeseg::loss
