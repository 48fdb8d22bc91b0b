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

#include "strokeseg/preprocessing.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/nifti.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace strokeseg::prep {

MultiChannelVolume::MultiChannelVolume(const Geometry& g, std::vector<std::string> names, float fill)
    : geom(g),
      channel_names(std::move(names)),
      data(static_cast<std::size_t>(g.dims.voxels()) * channel_names.size(), fill) {}

std::span<float> MultiChannelVolume::channel(int c) {
  const auto n = static_cast<std::size_t>(geom.dims.voxels());
  return {data.data() + static_cast<std::size_t>(c) * n, n};
}

std::span<const float> MultiChannelVolume::channel(int c) const {
  const auto n = static_cast<std::size_t>(geom.dims.voxels());
  return {data.data() + static_cast<std::size_t>(c) * n, n};
}

void CropSpec::validate() const {
  if (!size.positive()) throw ValidationError("crop size must be positive on every axis");
  if (!(foreground_bias >= 0.0 && foreground_bias <= 1.0)) {
    throw ValidationError("foreground_bias must lie in [0, 1]");
  }
}

namespace {

struct AxisTaps {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> w;  // weight of `hi`
};

AxisTaps linear_taps(std::int64_t out_n, std::int64_t in_n, double step) {
  AxisTaps t;
  t.lo.resize(out_n);
  t.hi.resize(out_n);
  t.w.resize(out_n);
  for (std::int64_t i = 0; i < out_n; ++i) {
    double c = static_cast<double>(i) * step;
    c = std::clamp(c, 0.0, static_cast<double>(in_n - 1));
    const auto i0 = static_cast<std::int64_t>(std::floor(c));
    t.lo[i] = i0;
    t.hi[i] = std::min(i0 + 1, in_n - 1);
    t.w[i] = c - static_cast<double>(i0);
  }
  return t;
}

std::vector<std::int64_t> nearest_taps(std::int64_t out_n, std::int64_t in_n, double step) {
  std::vector<std::int64_t> idx(out_n);
  for (std::int64_t i = 0; i < out_n; ++i) {
    const double c = static_cast<double>(i) * step;
    idx[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(c + 0.5)), 0, in_n - 1);
  }
  return idx;
}

Geometry resampled_geometry(const Geometry& in, const Vec3& target) {
  for (int a = 0; a < 3; ++a) {
    if (!(target[a] > 0.0)) throw PreconditionError("target spacing must be positive");
  }
  if (!in.dims.positive()) throw ShapeError("cannot resample a degenerate grid " + to_string(in.dims));
  Geometry out = in;
  out.spacing = target;
  for (int a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(in.dims[a]) * in.spacing[a] / target[a];
    out.dims[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(extent - 1e-9)));
  }
  return out;
}

template <typename V>
std::vector<V> gather_nearest(const std::vector<V>& src, const Extent3& in, const Extent3& out,
                              const std::array<std::vector<std::int64_t>, 3>& taps) {
  std::vector<V> dst(static_cast<std::size_t>(out.voxels()));
  std::size_t o = 0;
  for (std::int64_t k = 0; k < out.z; ++k) {
    for (std::int64_t j = 0; j < out.y; ++j) {
      const std::int64_t row = in.x * (taps[1][j] + in.y * taps[2][k]);
      for (std::int64_t i = 0; i < out.x; ++i) dst[o++] = src[row + taps[0][i]];
    }
  }
  return dst;
}

template <typename V>
std::vector<V> copy_box(const std::vector<V>& src, const Extent3& in, const Extent3& offset, const Extent3& size,
                        std::size_t channels) {
  std::vector<V> dst(static_cast<std::size_t>(size.voxels()) * channels);
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t base = c * static_cast<std::size_t>(in.voxels());
    for (std::int64_t k = 0; k < size.z; ++k) {
      for (std::int64_t j = 0; j < size.y; ++j) {
        const auto start = src.begin() + static_cast<std::ptrdiff_t>(base + in.index(offset.x, offset.y + j, offset.z + k));
        std::copy(start, start + size.x, dst.begin() + static_cast<std::ptrdiff_t>(o));
        o += static_cast<std::size_t>(size.x);
      }
    }
  }
  return dst;
}

Geometry shifted(const Geometry& g, const Extent3& offset, const Extent3& size) {
  Geometry out = g;
  out.dims = size;
  out.origin = g.index_to_world(Vec3(static_cast<double>(offset.x), static_cast<double>(offset.y),
                                     static_cast<double>(offset.z)));
  return out;
}

template <typename V>
std::vector<V> pad_box(const std::vector<V>& src, const Extent3& in, const Extent3& out, const Extent3& before,
                       std::size_t channels, V fill) {
  std::vector<V> dst(static_cast<std::size_t>(out.voxels()) * channels, fill);
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t sb = c * static_cast<std::size_t>(in.voxels());
    const std::size_t db = c * static_cast<std::size_t>(out.voxels());
    for (std::int64_t k = 0; k < in.z; ++k) {
      for (std::int64_t j = 0; j < in.y; ++j) {
        const auto s = src.begin() + static_cast<std::ptrdiff_t>(sb + in.index(0, j, k));
        std::copy(s, s + in.x,
                  dst.begin() + static_cast<std::ptrdiff_t>(db + out.index(before.x, before.y + j, before.z + k)));
      }
    }
  }
  return dst;
}

PadRecord plan_padding(const Extent3& dims, const Extent3& min_size) {
  PadRecord rec;
  rec.original = dims;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t extra = std::max<std::int64_t>(0, min_size[a] - dims[a]);
    rec.before[a] = extra / 2;
    rec.after[a] = extra - extra / 2;
  }
  return rec;
}

Extent3 padded_dims(const PadRecord& rec) {
  return {rec.original.x + rec.before.x + rec.after.x, rec.original.y + rec.before.y + rec.after.y,
          rec.original.z + rec.before.z + rec.after.z};
}

Geometry padded_geometry(const Geometry& g, const PadRecord& rec) {
  Geometry out = g;
  out.dims = padded_dims(rec);
  out.origin = g.index_to_world(Vec3(-static_cast<double>(rec.before.x), -static_cast<double>(rec.before.y),
                                     -static_cast<double>(rec.before.z)));
  return out;
}

void check_box(const Extent3& dims, const Extent3& offset, const Extent3& size) {
  for (int a = 0; a < 3; ++a) {
    if (offset[a] < 0 || size[a] < 1 || offset[a] + size[a] > dims[a]) {
      throw PreconditionError("crop box " + to_string(offset) + "+" + to_string(size) + " exceeds grid " +
                              to_string(dims));
    }
  }
}

}  // namespace

ImageVolume resample(const ImageVolume& vol, const Vec3& target_spacing, Interp mode) {
  const Geometry out_geom = resampled_geometry(vol.geom, target_spacing);
  if (vol.geom.spacing == target_spacing) return vol;

  const Extent3& in = vol.geom.dims;
  const Extent3& out = out_geom.dims;
  ImageVolume res;
  res.geom = out_geom;
  res.modality = vol.modality;

  if (mode == Interp::Nearest) {
    std::array<std::vector<std::int64_t>, 3> taps;
    for (int a = 0; a < 3; ++a) taps[a] = nearest_taps(out[a], in[a], target_spacing[a] / vol.geom.spacing[a]);
    res.data = gather_nearest(vol.data, in, out, taps);
    return res;
  }

  std::array<AxisTaps, 3> t;
  for (int a = 0; a < 3; ++a) t[a] = linear_taps(out[a], in[a], target_spacing[a] / vol.geom.spacing[a]);
  res.data.resize(static_cast<std::size_t>(out.voxels()));
  const auto& src = vol.data;
  std::size_t o = 0;
  for (std::int64_t k = 0; k < out.z; ++k) {
    const std::int64_t z0 = t[2].lo[k] * in.y, z1 = t[2].hi[k] * in.y;
    const double wz = t[2].w[k];
    for (std::int64_t j = 0; j < out.y; ++j) {
      const std::int64_t y0 = t[1].lo[j], y1 = t[1].hi[j];
      const double wy = t[1].w[j];
      const std::int64_t r00 = in.x * (y0 + z0), r10 = in.x * (y1 + z0);
      const std::int64_t r01 = in.x * (y0 + z1), r11 = in.x * (y1 + z1);
      for (std::int64_t i = 0; i < out.x; ++i) {
        const std::int64_t x0 = t[0].lo[i], x1 = t[0].hi[i];
        const double wx = t[0].w[i];
        const double c00 = src[r00 + x0] + wx * (src[r00 + x1] - src[r00 + x0]);
        const double c10 = src[r10 + x0] + wx * (src[r10 + x1] - src[r10 + x0]);
        const double c01 = src[r01 + x0] + wx * (src[r01 + x1] - src[r01 + x0]);
        const double c11 = src[r11 + x0] + wx * (src[r11 + x1] - src[r11 + x0]);
        const double c0 = c00 + wy * (c10 - c00);
        const double c1 = c01 + wy * (c11 - c01);
        res.data[o++] = c0 + wz * (c1 - c0);
      }
    }
  }
  return res;
}

SegmentationMask resample(const SegmentationMask& mask, const Vec3& target_spacing) {
  const Geometry out_geom = resampled_geometry(mask.geom, target_spacing);
  if (mask.geom.spacing == target_spacing) return mask;
  std::array<std::vector<std::int64_t>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    taps[a] = nearest_taps(out_geom.dims[a], mask.geom.dims[a], target_spacing[a] / mask.geom.spacing[a]);
  }
  SegmentationMask res;
  res.geom = out_geom;
  res.labels = gather_nearest(mask.labels, mask.geom.dims, out_geom.dims, taps);
  return res;
}

SegmentationMask resample_onto(const SegmentationMask& mask, const Geometry& target) {
  if (!mask.geom.dims.positive() || !target.dims.positive()) throw ShapeError("cannot resample a degenerate grid");
  SegmentationMask res(target);
  const bool shares_frame = (mask.geom.direction - target.direction).cwiseAbs().maxCoeff() < 1e-9 &&
                            (mask.geom.origin - target.origin).cwiseAbs().maxCoeff() < 1e-9;
  if (shares_frame) {
    // Pure spacing change: separable index mapping, exact for integer ratios.
    std::array<std::vector<std::int64_t>, 3> taps;
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double step = target.spacing[a] / mask.geom.spacing[a];
      taps[a].resize(target.dims[a]);
      for (std::int64_t i = 0; i < target.dims[a]; ++i) {
        const auto idx = static_cast<std::int64_t>(std::floor(static_cast<double>(i) * step + 0.5));
        if (idx >= mask.geom.dims[a]) inside = false;
        taps[a][i] = idx;
      }
    }
    if (inside) {
      res.labels = gather_nearest(mask.labels, mask.geom.dims, target.dims, taps);
      return res;
    }
  }
  const Mat3 src_inv = mask.geom.affine_linear().inverse();
  const Mat3 a = src_inv * target.affine_linear();
  const Vec3 b = src_inv * (target.origin - mask.geom.origin);
  const Extent3& in = mask.geom.dims;
  std::size_t o = 0;
  for (std::int64_t k = 0; k < target.dims.z; ++k) {
    for (std::int64_t j = 0; j < target.dims.y; ++j) {
      for (std::int64_t i = 0; i < target.dims.x; ++i, ++o) {
        const Vec3 p = a * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) + b;
        std::array<std::int64_t, 3> q{};
        bool ok = true;
        for (int ax = 0; ax < 3; ++ax) {
          q[ax] = static_cast<std::int64_t>(std::floor(p[ax] + 0.5));
          if (q[ax] < 0 || q[ax] >= in[ax]) ok = false;
        }
        if (ok) res.labels[o] = mask.labels[in.index(q[0], q[1], q[2])];
      }
    }
  }
  return res;
}

MultiChannelVolume stack_channels(std::span<const ImageVolume> vols) {
  if (vols.empty()) throw PreconditionError("stack_channels needs at least one volume");
  const Geometry& ref = vols.front().geom;
  std::vector<std::string> names;
  for (const auto& v : vols) {
    if (!(v.geom.dims == ref.dims)) {
      throw AlignmentError("channel grids differ: " + to_string(ref.dims) + " vs " + to_string(v.geom.dims) +
                           " (resample first)");
    }
    if (!same_grid(v.geom, ref, 1e-4)) {
      throw AlignmentError("channel geometry differs beyond 1e-4 mm (resample first)");
    }
    names.push_back(to_string(v.modality));
  }
  MultiChannelVolume out(ref, std::move(names));
  for (std::size_t c = 0; c < vols.size(); ++c) {
    auto dst = out.channel(static_cast<int>(c));
    const auto& src = vols[c].data;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]);
  }
  return out;
}

MultiChannelVolume normalize(MultiChannelVolume vol, NormRegion region) {
  constexpr double kEps = 1e-8;
  for (int c = 0; c < vol.channels(); ++c) {
    auto ch = vol.channel(c);
    double sum = 0.0;
    std::size_t n = 0;
    for (float v : ch) {
      if (region == NormRegion::All || v != 0.0f) {
        sum += v;
        ++n;
      }
    }
    if (n == 0) {
      std::fill(ch.begin(), ch.end(), 0.0f);
      continue;
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (float v : ch) {
      if (region == NormRegion::All || v != 0.0f) sq += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    if (sd < kEps) {
      std::fill(ch.begin(), ch.end(), 0.0f);
      continue;
    }
    const double inv = 1.0 / sd;
    for (float& v : ch) {
      if (region == NormRegion::All || v != 0.0f) v = static_cast<float>((v - mean) * inv);
    }
  }
  return vol;
}

std::pair<MultiChannelVolume, PadRecord> pad_to_min(const MultiChannelVolume& vol, const Extent3& min_size,
                                                    float fill) {
  PadRecord rec = plan_padding(vol.dims(), min_size);
  if (rec.empty()) return {vol, rec};
  MultiChannelVolume out;
  out.geom = padded_geometry(vol.geom, rec);
  out.channel_names = vol.channel_names;
  out.data = pad_box(vol.data, vol.dims(), out.geom.dims, rec.before, vol.channel_names.size(), fill);
  return {std::move(out), rec};
}

std::pair<SegmentationMask, PadRecord> pad_to_min(const SegmentationMask& mask, const Extent3& min_size,
                                                  std::uint8_t fill) {
  PadRecord rec = plan_padding(mask.dims(), min_size);
  if (rec.empty()) return {mask, rec};
  SegmentationMask out;
  out.geom = padded_geometry(mask.geom, rec);
  out.labels = pad_box(mask.labels, mask.dims(), out.geom.dims, rec.before, 1, fill);
  return {std::move(out), rec};
}

MultiChannelVolume unpad(const MultiChannelVolume& vol, const PadRecord& record) {
  if (record.empty()) return vol;
  return crop(vol, record.before, record.original);
}

SegmentationMask unpad(const SegmentationMask& mask, const PadRecord& record) {
  if (record.empty()) return mask;
  return crop(mask, record.before, record.original);
}

MultiChannelVolume crop(const MultiChannelVolume& vol, const Extent3& offset, const Extent3& size) {
  check_box(vol.dims(), offset, size);
  MultiChannelVolume out;
  out.geom = shifted(vol.geom, offset, size);
  out.channel_names = vol.channel_names;
  out.data = copy_box(vol.data, vol.dims(), offset, size, vol.channel_names.size());
  return out;
}

SegmentationMask crop(const SegmentationMask& mask, const Extent3& offset, const Extent3& size) {
  check_box(mask.dims(), offset, size);
  SegmentationMask out;
  out.geom = shifted(mask.geom, offset, size);
  out.labels = copy_box(mask.labels, mask.dims(), offset, size, 1);
  return out;
}

CropResult sample_crop(const MultiChannelVolume& vol, const SegmentationMask* mask, const CropSpec& spec,
                       std::mt19937_64& rng) {
  spec.validate();
  const Extent3& dims = vol.dims();
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < spec.size[a]) {
      throw PreconditionError("volume " + to_string(dims) + " is smaller than crop " + to_string(spec.size) +
                              " (pad first)");
    }
  }
  if (mask != nullptr && !(mask->dims() == dims)) {
    throw PreconditionError("mask grid " + to_string(mask->dims()) + " does not match image " + to_string(dims));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool biased = unit(rng) < spec.foreground_bias;
  Extent3 offset;
  bool placed = false;
  if (biased && mask != nullptr) {
    const std::int64_t fg = mask->foreground_count();
    if (fg > 0) {
      std::uniform_int_distribution<std::int64_t> pick(0, fg - 1);
      std::int64_t target = pick(rng);
      std::int64_t flat = 0;
      for (; flat < dims.voxels(); ++flat) {
        if (mask->labels[static_cast<std::size_t>(flat)] != 0 && target-- == 0) break;
      }
      const std::int64_t cx = flat % dims.x;
      const std::int64_t cy = (flat / dims.x) % dims.y;
      const std::int64_t cz = flat / (dims.x * dims.y);
      const std::array<std::int64_t, 3> centre{cx, cy, cz};
      for (int a = 0; a < 3; ++a) {
        offset[a] = std::clamp<std::int64_t>(centre[a] - spec.size[a] / 2, 0, dims[a] - spec.size[a]);
      }
      placed = true;
    }
  }
  if (!placed) {
    for (int a = 0; a < 3; ++a) {
      std::uniform_int_distribution<std::int64_t> pos(0, dims[a] - spec.size[a]);
      offset[a] = pos(rng);
    }
  }

  CropResult res;
  res.offset = offset;
  res.image = crop(vol, offset, spec.size);
  if (mask != nullptr) res.mask = crop(*mask, offset, spec.size);
  return res;
}

PreprocessedCase preprocess_case(const io::CaseRecord& record, const PreprocessOptions& options) {
  PreprocessedCase out;
  out.case_id = record.case_id;
  const ImageVolume dwi = io::load_volume(record.dwi, Modality::DWI);
  const ImageVolume adc = io::load_volume(record.adc, Modality::ADC);
  out.native.native = dwi.geom;

  const std::array<ImageVolume, 2> channels{resample(dwi, options.target_spacing, Interp::Trilinear),
                                            resample(adc, options.target_spacing, Interp::Trilinear)};
  out.image = normalize(stack_channels(channels), options.norm_region);
  out.native.resampled = out.image.geom;

  if (record.label) {
    SegmentationMask mask = io::load_mask(*record.label);
    if (!same_grid(mask.geom, dwi.geom, 1e-4)) {
      throw AlignmentError("label grid of case " + record.case_id + " does not match its DWI grid");
    }
    out.mask = resample(mask, options.target_spacing);
  }
  return out;
}

}  // namespace strokeseg::prep
