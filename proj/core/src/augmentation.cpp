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

#include "strokeseg/augmentation.hpp"

#include "strokeseg/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <numbers>

namespace strokeseg::aug {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
}

void check_range(const Range& r, const char* name) {
  if (!(r.min <= r.max)) throw ValidationError(std::string(name) + " must satisfy min <= max");
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return lo + (hi - lo) * d(rng);
}

template <typename V>
void flip_buffer(std::vector<V>& data, const Extent3& d, std::size_t channels, const std::array<bool, 3>& axes) {
  std::vector<V> out(data.size());
  const auto n = static_cast<std::size_t>(d.voxels());
  for (std::size_t c = 0; c < channels; ++c) {
    const V* src = data.data() + c * n;
    V* dst = out.data() + c * n;
    for (std::int64_t k = 0; k < d.z; ++k) {
      const std::int64_t sk = axes[2] ? d.z - 1 - k : k;
      for (std::int64_t j = 0; j < d.y; ++j) {
        const std::int64_t sj = axes[1] ? d.y - 1 - j : j;
        const V* srow = src + d.index(0, sj, sk);
        V* drow = dst + d.index(0, j, k);
        if (axes[0]) {
          for (std::int64_t i = 0; i < d.x; ++i) drow[i] = srow[d.x - 1 - i];
        } else {
          std::copy(srow, srow + d.x, drow);
        }
      }
    }
  }
  data.swap(out);
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable 1D convolution along `axis` with replicate borders.
void convolve_axis(std::span<float> ch, const Extent3& d, int axis, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const std::int64_t len = d[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d.x : d.x * d.y);
  std::vector<double> line(static_cast<std::size_t>(len));
  const std::array<std::int64_t, 3> outer_dims{axis == 0 ? d.y : d.x, axis == 2 ? d.y : d.z, 0};
  for (std::int64_t b = 0; b < outer_dims[1]; ++b) {
    for (std::int64_t a = 0; a < outer_dims[0]; ++a) {
      std::int64_t base = 0;
      if (axis == 0) base = d.index(0, a, b);
      if (axis == 1) base = d.index(a, 0, b);
      if (axis == 2) base = d.index(a, b, 0);
      for (std::int64_t i = 0; i < len; ++i) line[i] = ch[base + i * stride];
      for (std::int64_t i = 0; i < len; ++i) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const std::int64_t s = std::clamp<std::int64_t>(i + t, 0, len - 1);
          acc += kernel[static_cast<std::size_t>(t + radius)] * line[s];
        }
        ch[base + i * stride] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

void AugmentConfig::validate() const {
  check_probability(flip_prob_per_axis, "flip_prob_per_axis");
  check_probability(affine_prob, "affine_prob");
  check_probability(smooth_prob, "smooth_prob");
  check_probability(noise_prob, "noise_prob");
  check_probability(intensity_scale_prob, "intensity_scale_prob");
  check_probability(intensity_shift_prob, "intensity_shift_prob");
  check_range(smooth_sigma, "smooth_sigma");
  check_range(noise_std, "noise_std");
  check_range(intensity_scale, "intensity_scale");
  check_range(intensity_shift, "intensity_shift");
  if (!(rot_range_deg >= 0.0)) throw ValidationError("rot_range_deg must be >= 0");
  if (!(scale_range >= 0.0 && scale_range < 1.0)) throw ValidationError("scale_range must lie in [0, 1)");
  if (smooth_sigma.min < 0.0 || noise_std.min < 0.0) throw ValidationError("sigma/std ranges must be >= 0");
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.flip_prob_per_axis = 0.0;
  c.affine_prob = 0.0;
  c.smooth_prob = 0.0;
  c.noise_prob = 0.0;
  c.intensity_scale_prob = 0.0;
  c.intensity_shift_prob = 0.0;
  return c;
}

Mat3 SpatialTransform::forward() const {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const Mat3 rx = Eigen::AngleAxisd(rotation_deg[0] * kDeg, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(rotation_deg[1] * kDeg, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rz = Eigen::AngleAxisd(rotation_deg[2] * kDeg, Vec3::UnitZ()).toRotationMatrix();
  return rz * ry * rx * scale.asDiagonal();
}

Vec3 SpatialTransform::source_of(const Vec3& p, const Extent3& dims) const {
  const Vec3 centre(0.5 * static_cast<double>(dims.x - 1), 0.5 * static_cast<double>(dims.y - 1),
                    0.5 * static_cast<double>(dims.z - 1));
  return forward().inverse() * (p - centre) + centre;
}

Sample flip(Sample s, const std::array<bool, 3>& axes) {
  if (!axes[0] && !axes[1] && !axes[2]) return s;
  flip_buffer(s.image.data, s.image.dims(), static_cast<std::size_t>(s.image.channels()), axes);
  if (s.mask) flip_buffer(s.mask->labels, s.mask->dims(), 1, axes);
  return s;
}

Sample apply_spatial(Sample s, const SpatialTransform& t) {
  const Extent3 d = s.image.dims();
  if (s.mask && !(s.mask->dims() == d)) throw PreconditionError("image and mask grids differ");
  const Vec3 centre(0.5 * static_cast<double>(d.x - 1), 0.5 * static_cast<double>(d.y - 1),
                    0.5 * static_cast<double>(d.z - 1));
  const Mat3 inv = t.forward().inverse();
  const Vec3 shift = centre - inv * centre;

  const int channels = s.image.channels();
  const auto n = static_cast<std::size_t>(d.voxels());
  std::vector<float> out(s.image.data.size(), 0.0f);
  std::vector<std::uint8_t> out_mask;
  if (s.mask) out_mask.assign(n, 0);

  std::size_t o = 0;
  for (std::int64_t k = 0; k < d.z; ++k) {
    for (std::int64_t j = 0; j < d.y; ++j) {
      for (std::int64_t i = 0; i < d.x; ++i, ++o) {
        const Vec3 q = inv * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) + shift;
        if (s.mask) {
          const auto mx = static_cast<std::int64_t>(std::floor(q[0] + 0.5));
          const auto my = static_cast<std::int64_t>(std::floor(q[1] + 0.5));
          const auto mz = static_cast<std::int64_t>(std::floor(q[2] + 0.5));
          if (mx >= 0 && my >= 0 && mz >= 0 && mx < d.x && my < d.y && mz < d.z) {
            out_mask[o] = s.mask->labels[d.index(mx, my, mz)];
          }
        }
        const double fx = std::floor(q[0]), fy = std::floor(q[1]), fz = std::floor(q[2]);
        const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy),
                   z0 = static_cast<std::int64_t>(fz);
        const double wx = q[0] - fx, wy = q[1] - fy, wz = q[2] - fz;
        // Corners outside the grid contribute zero.
        for (int c = 0; c < channels; ++c) {
          const float* src = s.image.data.data() + static_cast<std::size_t>(c) * n;
          double acc = 0.0;
          for (int dz = 0; dz < 2; ++dz) {
            const std::int64_t zz = z0 + dz;
            if (zz < 0 || zz >= d.z) continue;
            const double w_z = dz ? wz : 1.0 - wz;
            for (int dy = 0; dy < 2; ++dy) {
              const std::int64_t yy = y0 + dy;
              if (yy < 0 || yy >= d.y) continue;
              const double w_y = dy ? wy : 1.0 - wy;
              for (int dx = 0; dx < 2; ++dx) {
                const std::int64_t xx = x0 + dx;
                if (xx < 0 || xx >= d.x) continue;
                const double w = w_z * w_y * (dx ? wx : 1.0 - wx);
                if (w != 0.0) acc += w * src[d.index(xx, yy, zz)];
              }
            }
          }
          out[static_cast<std::size_t>(c) * n + o] = static_cast<float>(acc);
        }
      }
    }
  }
  s.image.data.swap(out);
  if (s.mask) s.mask->labels.swap(out_mask);
  return s;
}

prep::MultiChannelVolume gaussian_smooth(prep::MultiChannelVolume img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const std::vector<double> kernel = gaussian_kernel(sigma);
  for (int c = 0; c < img.channels(); ++c) {
    auto ch = img.channel(c);
    for (int axis = 0; axis < 3; ++axis) convolve_axis(ch, img.dims(), axis, kernel);
  }
  return img;
}

prep::MultiChannelVolume apply_intensity(prep::MultiChannelVolume img, const IntensityDraw& d, std::mt19937_64& rng) {
  if (d.smooth_sigma) img = gaussian_smooth(std::move(img), *d.smooth_sigma);
  if (d.noise_std && *d.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, *d.noise_std);
    for (float& v : img.data) v = static_cast<float>(v + noise(rng));
  }
  if (d.scale) {
    for (float& v : img.data) v = static_cast<float>(v * *d.scale);
  }
  if (d.shift) {
    for (float& v : img.data) v = static_cast<float>(v + *d.shift);
  }
  return img;
}

std::array<bool, 3> draw_flip(const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::array<bool, 3> axes{};
  for (auto& a : axes) a = uniform(rng, 0.0, 1.0) < cfg.flip_prob_per_axis;
  return axes;
}

std::optional<SpatialTransform> draw_spatial(const AugmentConfig& cfg, std::mt19937_64& rng) {
  const bool apply = uniform(rng, 0.0, 1.0) < cfg.affine_prob;
  SpatialTransform t;
  for (int a = 0; a < 3; ++a) t.rotation_deg[a] = uniform(rng, -cfg.rot_range_deg, cfg.rot_range_deg);
  for (int a = 0; a < 3; ++a) t.scale[a] = 1.0 + uniform(rng, -cfg.scale_range, cfg.scale_range);
  if (!apply) return std::nullopt;
  return t;
}

IntensityDraw draw_intensity(const AugmentConfig& cfg, std::mt19937_64& rng) {
  IntensityDraw d;
  const bool smooth = uniform(rng, 0.0, 1.0) < cfg.smooth_prob;
  const double sigma = uniform(rng, cfg.smooth_sigma.min, cfg.smooth_sigma.max);
  const bool noise = uniform(rng, 0.0, 1.0) < cfg.noise_prob;
  const double sd = uniform(rng, cfg.noise_std.min, cfg.noise_std.max);
  const bool scale = uniform(rng, 0.0, 1.0) < cfg.intensity_scale_prob;
  const double factor = uniform(rng, cfg.intensity_scale.min, cfg.intensity_scale.max);
  const bool shift = uniform(rng, 0.0, 1.0) < cfg.intensity_shift_prob;
  const double offset = uniform(rng, cfg.intensity_shift.min, cfg.intensity_shift.max);
  if (smooth) d.smooth_sigma = sigma;
  if (noise) d.noise_std = sd;
  if (scale) d.scale = factor;
  if (shift) d.shift = offset;
  return d;
}

Sample random_flip(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  return flip(std::move(s), draw_flip(cfg, rng));
}

Sample random_affine(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  const auto t = draw_spatial(cfg, rng);
  if (!t) return s;
  return apply_spatial(std::move(s), *t);
}

prep::MultiChannelVolume random_intensity(prep::MultiChannelVolume img, const AugmentConfig& cfg,
                                          std::mt19937_64& rng) {
  const IntensityDraw d = draw_intensity(cfg, rng);
  return apply_intensity(std::move(img), d, rng);
}

Sample augment(Sample s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  s = random_flip(std::move(s), cfg, rng);
  s = random_affine(std::move(s), cfg, rng);
  s.image = random_intensity(std::move(s.image), cfg, rng);
  return s;
}

}  // namespace strokeseg::aug
