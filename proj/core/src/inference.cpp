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

#include "strokeseg/inference.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/weights_archive.hpp"

#include <cmath>

namespace strokeseg::infer {

namespace {

template <typename T>
nn::Tensor<T> window_tensor(const prep::MultiChannelVolume& vol, const Extent3& offset, const Extent3& size) {
  nn::Tensor<T> t(1, vol.channels(), size);
  const Extent3& d = vol.dims();
  for (int c = 0; c < vol.channels(); ++c) {
    const auto src = vol.channel(c);
    T* dst = t.plane(0, c);
    for (std::int64_t k = 0; k < size.z; ++k) {
      for (std::int64_t j = 0; j < size.y; ++j) {
        const float* row = src.data() + d.index(offset.x, offset.y + j, offset.z + k);
        T* out = dst + size.index(0, j, k);
        for (std::int64_t i = 0; i < size.x; ++i) out[i] = static_cast<T>(row[i]);
      }
    }
  }
  return t;
}

}  // namespace

void SlidingWindowOptions::validate() const {
  if (!window.positive()) throw ValidationError("inference window must be positive on every axis");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("overlap must lie in [0, 1)");
  if (!(sigma_scale > 0.0)) throw ValidationError("sigma_scale must be > 0");
}

std::vector<std::int64_t> window_starts(std::int64_t dim, std::int64_t window, double overlap) {
  if (dim < window) throw PreconditionError("volume smaller than window");
  const auto stride = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(window * (1.0 - overlap))));
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + window < dim; s += stride) starts.push_back(s);
  starts.push_back(dim - window);
  return starts;
}

std::vector<double> importance_weights(const Extent3& window, double sigma_scale) {
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const double n = static_cast<double>(window[a]);
    const double centre = (n - 1.0) / 2.0;
    const double sigma = sigma_scale * n;
    axis[a].resize(static_cast<std::size_t>(window[a]));
    for (std::int64_t i = 0; i < window[a]; ++i) {
      const double d = (static_cast<double>(i) - centre) / sigma;
      axis[a][i] = std::exp(-0.5 * d * d);
    }
  }
  std::vector<double> w(static_cast<std::size_t>(window.voxels()));
  double peak = 0.0;
  std::size_t o = 0;
  for (std::int64_t k = 0; k < window.z; ++k) {
    for (std::int64_t j = 0; j < window.y; ++j) {
      for (std::int64_t i = 0; i < window.x; ++i, ++o) {
        w[o] = axis[0][i] * axis[1][j] * axis[2][k];
        peak = std::max(peak, w[o]);
      }
    }
  }
  for (double& x : w) x /= peak;
  return w;
}

template <typename T>
ProbabilityMap sliding_window_predict(nn::SegResNet<T>& net, const prep::MultiChannelVolume& vol,
                                      const SlidingWindowOptions& opts) {
  opts.validate();
  const auto& cfg = net.config();
  if (vol.channels() != cfg.in_channels) {
    throw ShapeError("volume has " + std::to_string(vol.channels()) + " channels, network expects " +
                     std::to_string(cfg.in_channels));
  }
  for (int a = 0; a < 3; ++a) {
    if (opts.window[a] % cfg.divisor() != 0) {
      throw ShapeError("window axis " + std::string(1, "xyz"[a]) + " (" + std::to_string(opts.window[a]) +
                       ") is not divisible by " + std::to_string(cfg.divisor()));
    }
  }
  const auto [padded, record] = prep::pad_to_min(vol, opts.window, 0.0f);
  const Extent3& d = padded.dims();
  const int classes = cfg.out_channels;
  ProbabilityMap out(padded.geom, classes);

  if (d == opts.window) {
    const auto logits = net.forward(window_tensor<T>(padded, {}, d), nn::Mode::Eval);
    const auto probs = nn::softmax_channels(logits.front());
    for (std::size_t i = 0; i < probs.data.size(); ++i) out.probs[i] = static_cast<float>(probs.data[i]);
  } else {
    const auto weights = importance_weights(opts.window, opts.sigma_scale);
    const std::int64_t v = d.voxels();
    std::vector<double> acc(static_cast<std::size_t>(classes * v), 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(v), 0.0);
    const auto xs = window_starts(d.x, opts.window.x, opts.overlap);
    const auto ys = window_starts(d.y, opts.window.y, opts.overlap);
    const auto zs = window_starts(d.z, opts.window.z, opts.overlap);
    const Extent3& w = opts.window;
    for (auto z0 : zs) {
      for (auto y0 : ys) {
        for (auto x0 : xs) {
          const Extent3 off{x0, y0, z0};
          const auto logits = net.forward(window_tensor<T>(padded, off, w), nn::Mode::Eval);
          const auto probs = nn::softmax_channels(logits.front());
          for (std::int64_t k = 0; k < w.z; ++k) {
            for (std::int64_t j = 0; j < w.y; ++j) {
              for (std::int64_t i = 0; i < w.x; ++i) {
                const std::int64_t src = w.index(i, j, k);
                const std::int64_t dst = d.index(x0 + i, y0 + j, z0 + k);
                const double wt = weights[src];
                wsum[dst] += wt;
                for (int c = 0; c < classes; ++c) acc[c * v + dst] += wt * probs.plane(0, c)[src];
              }
            }
          }
        }
      }
    }
    for (int c = 0; c < classes; ++c) {
      for (std::int64_t i = 0; i < v; ++i) out.probs[c * v + i] = static_cast<float>(acc[c * v + i] / wsum[i]);
    }
  }
  net.release_cache();
  if (record.empty()) return out;

  // Crop the padding back off.
  ProbabilityMap cropped(vol.geom, classes);
  const Extent3& o = vol.dims();
  for (int c = 0; c < classes; ++c) {
    for (std::int64_t k = 0; k < o.z; ++k) {
      for (std::int64_t j = 0; j < o.y; ++j) {
        for (std::int64_t i = 0; i < o.x; ++i) {
          cropped.channel(c)[o.index(i, j, k)] =
              out.channel(c)[d.index(i + record.before.x, j + record.before.y, k + record.before.z)];
        }
      }
    }
  }
  return cropped;
}

ProbabilityMap mean_map(std::span<const ProbabilityMap> maps) {
  if (maps.empty()) throw PreconditionError("mean of zero probability maps");
  const ProbabilityMap& first = maps.front();
  std::vector<double> acc(first.probs.size(), 0.0);
  for (const auto& m : maps) {
    if (m.classes != first.classes || !(m.geom.dims == first.geom.dims)) {
      throw ShapeError("probability maps differ in shape");
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.probs[i];
  }
  ProbabilityMap out(first.geom, first.classes);
  const double n = static_cast<double>(maps.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.probs[i] = static_cast<float>(acc[i] / n);
  return out;
}

void EnsembleSpec::validate() const {
  if (checkpoint_paths.empty()) throw ValidationError("ensemble needs at least one checkpoint");
  expected.validate();
}

Ensemble::Ensemble(const EnsembleSpec& spec) {
  spec.validate();
  for (const auto& p : spec.checkpoint_paths) {
    models_.push_back(std::make_unique<nn::SegResNet<float>>(nn::load_weights<float>(p, spec.expected, true)));
  }
}

Ensemble::Ensemble(std::vector<std::unique_ptr<nn::SegResNet<float>>> models) : models_(std::move(models)) {
  if (models_.empty()) throw ValidationError("ensemble needs at least one model");
}

ProbabilityMap Ensemble::predict(const prep::MultiChannelVolume& vol, const SlidingWindowOptions& opts) {
  if (models_.size() == 1) return sliding_window_predict(*models_.front(), vol, opts);
  // Running double sum in model order keeps the result independent of
  // scheduling and lets k identical members reproduce one member exactly.
  std::vector<double> acc;
  ProbabilityMap out;
  for (auto& m : models_) {
    ProbabilityMap pm = sliding_window_predict(*m, vol, opts);
    if (acc.empty()) {
      acc.assign(pm.probs.size(), 0.0);
      out = ProbabilityMap(pm.geom, pm.classes);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += pm.probs[i];
  }
  const double n = static_cast<double>(models_.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.probs[i] = static_cast<float>(acc[i] / n);
  return out;
}

ProbabilityMap ensemble_predict(const EnsembleSpec& spec, const prep::MultiChannelVolume& vol,
                                const SlidingWindowOptions& opts) {
  Ensemble e(spec);
  return e.predict(vol, opts);
}

SegmentationMask binarize(const ProbabilityMap& pm) {
  SegmentationMask mask(pm.geom);
  const std::int64_t v = pm.geom.dims.voxels();
  for (std::int64_t i = 0; i < v; ++i) {
    int best = 0;
    float best_p = pm.probs[i];
    for (int c = 1; c < pm.classes; ++c) {
      const float p = pm.probs[c * v + i];
      if (p > best_p) {
        best = c;
        best_p = p;
      }
    }
    mask.labels[i] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

ImageVolume foreground_probability(const ProbabilityMap& pm) {
  if (pm.classes < 2) throw ShapeError("probability map has no foreground class");
  ImageVolume vol(pm.geom);
  const auto fg = pm.channel(1);
  for (std::size_t i = 0; i < fg.size(); ++i) vol.data[i] = fg[i];
  return vol;
}

SegmentationMask restore_native(const SegmentationMask& mask, const prep::NativeGeometry& record) {
  if (!(mask.geom.dims == record.resampled.dims)) {
    throw ShapeError("mask grid " + to_string(mask.geom.dims) + " does not match the recorded working grid " +
                     to_string(record.resampled.dims));
  }
  if (same_grid(mask.geom, record.native, 1e-9)) {
    SegmentationMask out = mask;
    out.geom = record.native;
    return out;
  }
  return prep::resample_onto(mask, record.native);
}

template ProbabilityMap sliding_window_predict<float>(nn::SegResNet<float>&, const prep::MultiChannelVolume&,
                                                      const SlidingWindowOptions&);
template ProbabilityMap sliding_window_predict<double>(nn::SegResNet<double>&, const prep::MultiChannelVolume&,
                                                       const SlidingWindowOptions&);

}  // namespace strokeseg::infer
