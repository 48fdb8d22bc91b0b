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

#include "strokeseg/layers.hpp"

#include "strokeseg/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace strokeseg::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using StridedMap = Eigen::Map<Mat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const Mat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Column buffers are capped at this many elements per chunk of output planes.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;

template <typename T>
std::vector<T>& scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

struct ConvGeometry {
  Extent3 in;
  Extent3 out;
  int k = 3;
  int s = 1;
  int p = 1;
  std::int64_t plane_out() const { return out.x * out.y; }
};

// col[kk * rows + v] for kk over (cin, dz, dy, dx) and v over output voxels in
// planes [z0, z0 + nz).
template <typename T>
void im2col(const T* x, int cin, const ConvGeometry& g, std::int64_t z0, std::int64_t nz, T* col) {
  const std::int64_t rows = nz * g.plane_out();
  const std::int64_t vin = g.in.voxels();
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = x + ci * vin;
    for (int dz = 0; dz < g.k; ++dz) {
      for (int dy = 0; dy < g.k; ++dy) {
        for (int dx = 0; dx < g.k; ++dx) {
          const std::int64_t kk = ((static_cast<std::int64_t>(ci) * g.k + dz) * g.k + dy) * g.k + dx;
          T* dst = col + kk * rows;
          for (std::int64_t oz = z0; oz < z0 + nz; ++oz) {
            const std::int64_t iz = oz * g.s + dz - g.p;
            for (std::int64_t oy = 0; oy < g.out.y; ++oy) {
              const std::int64_t iy = oy * g.s + dy - g.p;
              T* drow = dst + ((oz - z0) * g.out.y + oy) * g.out.x;
              if (iz < 0 || iz >= g.in.z || iy < 0 || iy >= g.in.y) {
                std::fill(drow, drow + g.out.x, T(0));
                continue;
              }
              const T* srow = src + (iz * g.in.y + iy) * g.in.x;
              if (g.s == 1) {
                const std::int64_t shift = dx - g.p;
                const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                const std::int64_t hi = std::min<std::int64_t>(g.out.x, g.in.x - shift);
                std::fill(drow, drow + lo, T(0));
                if (hi > lo) std::memcpy(drow + lo, srow + lo + shift, sizeof(T) * static_cast<std::size_t>(hi - lo));
                std::fill(drow + std::max(lo, hi), drow + g.out.x, T(0));
              } else {
                for (std::int64_t ox = 0; ox < g.out.x; ++ox) {
                  const std::int64_t ix = ox * g.s + dx - g.p;
                  drow[ox] = (ix >= 0 && ix < g.in.x) ? srow[ix] : T(0);
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int cin, const ConvGeometry& g, std::int64_t z0, std::int64_t nz, T* dx_out) {
  const std::int64_t rows = nz * g.plane_out();
  const std::int64_t vin = g.in.voxels();
  for (int ci = 0; ci < cin; ++ci) {
    T* dst = dx_out + ci * vin;
    for (int dz = 0; dz < g.k; ++dz) {
      for (int dy = 0; dy < g.k; ++dy) {
        for (int dx = 0; dx < g.k; ++dx) {
          const std::int64_t kk = ((static_cast<std::int64_t>(ci) * g.k + dz) * g.k + dy) * g.k + dx;
          const T* src = col + kk * rows;
          for (std::int64_t oz = z0; oz < z0 + nz; ++oz) {
            const std::int64_t iz = oz * g.s + dz - g.p;
            if (iz < 0 || iz >= g.in.z) continue;
            for (std::int64_t oy = 0; oy < g.out.y; ++oy) {
              const std::int64_t iy = oy * g.s + dy - g.p;
              if (iy < 0 || iy >= g.in.y) continue;
              const T* srow = src + ((oz - z0) * g.out.y + oy) * g.out.x;
              T* drow = dst + (iz * g.in.y + iy) * g.in.x;
              if (g.s == 1) {
                const std::int64_t shift = dx - g.p;
                const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                const std::int64_t hi = std::min<std::int64_t>(g.out.x, g.in.x - shift);
                for (std::int64_t ox = lo; ox < hi; ++ox) drow[ox + shift] += srow[ox];
              } else {
                for (std::int64_t ox = 0; ox < g.out.x; ++ox) {
                  const std::int64_t ix = ox * g.s + dx - g.p;
                  if (ix >= 0 && ix < g.in.x) drow[ix] += srow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

struct UpTap {
  std::int64_t lo;
  std::int64_t hi;
  double w;  // weight of hi
};

std::vector<UpTap> upsample_taps(std::int64_t n) {
  std::vector<UpTap> taps(static_cast<std::size_t>(2 * n));
  for (std::int64_t o = 0; o < 2 * n; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * 0.5 - 0.5);
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    taps[o] = {lo, std::min(lo + 1, n - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

// Upsamples one axis of every plane: `in` has extent `d`, output doubles axis `axis`.
template <typename T>
std::vector<T> upsample_axis(const std::vector<T>& in, std::int64_t planes, const Extent3& d, int axis) {
  Extent3 od = d;
  od[axis] *= 2;
  const auto taps = upsample_taps(d[axis]);
  std::vector<T> out(static_cast<std::size_t>(planes * od.voxels()));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * d.voxels();
    T* dst = out.data() + p * od.voxels();
    for (std::int64_t k = 0; k < od.z; ++k) {
      for (std::int64_t j = 0; j < od.y; ++j) {
        T* drow = dst + od.index(0, j, k);
        if (axis == 0) {
          const T* srow = src + d.index(0, j, k);
          for (std::int64_t i = 0; i < od.x; ++i) {
            const auto& t = taps[i];
            drow[i] = static_cast<T>((1.0 - t.w) * srow[t.lo] + t.w * srow[t.hi]);
          }
        } else if (axis == 1) {
          const auto& t = taps[j];
          const T* r0 = src + d.index(0, t.lo, k);
          const T* r1 = src + d.index(0, t.hi, k);
          for (std::int64_t i = 0; i < od.x; ++i) drow[i] = static_cast<T>((1.0 - t.w) * r0[i] + t.w * r1[i]);
        } else {
          const auto& t = taps[k];
          const T* r0 = src + d.index(0, j, t.lo);
          const T* r1 = src + d.index(0, j, t.hi);
          for (std::int64_t i = 0; i < od.x; ++i) drow[i] = static_cast<T>((1.0 - t.w) * r0[i] + t.w * r1[i]);
        }
      }
    }
  }
  return out;
}

// Adjoint of upsample_axis: `in` has the doubled extent along `axis`, `d` is the small extent.
template <typename T>
std::vector<T> upsample_axis_adjoint(const std::vector<T>& in, std::int64_t planes, const Extent3& d, int axis) {
  Extent3 od = d;
  od[axis] *= 2;
  const auto taps = upsample_taps(d[axis]);
  std::vector<T> out(static_cast<std::size_t>(planes * d.voxels()), T(0));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * od.voxels();
    T* dst = out.data() + p * d.voxels();
    for (std::int64_t k = 0; k < od.z; ++k) {
      for (std::int64_t j = 0; j < od.y; ++j) {
        const T* srow = src + od.index(0, j, k);
        if (axis == 0) {
          T* drow = dst + d.index(0, j, k);
          for (std::int64_t i = 0; i < od.x; ++i) {
            const auto& t = taps[i];
            drow[t.lo] += static_cast<T>((1.0 - t.w) * srow[i]);
            drow[t.hi] += static_cast<T>(t.w * srow[i]);
          }
        } else if (axis == 1) {
          const auto& t = taps[j];
          T* r0 = dst + d.index(0, t.lo, k);
          T* r1 = dst + d.index(0, t.hi, k);
          for (std::int64_t i = 0; i < od.x; ++i) {
            r0[i] += static_cast<T>((1.0 - t.w) * srow[i]);
            r1[i] += static_cast<T>(t.w * srow[i]);
          }
        } else {
          const auto& t = taps[k];
          T* r0 = dst + d.index(0, j, t.lo);
          T* r1 = dst + d.index(0, j, t.hi);
          for (std::int64_t i = 0; i < od.x; ++i) {
            r0[i] += static_cast<T>((1.0 - t.w) * srow[i]);
            r1[i] += static_cast<T>(t.w * srow[i]);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
Conv3d<T>::Conv3d(const std::string& name, const ConvSpec& spec) : spec_(spec) {
  if (spec.kernel != 1 && spec.kernel != 3) throw ValidationError("conv kernel must be 1 or 3");
  if (spec.stride != 1 && spec.stride != 2) throw ValidationError("conv stride must be 1 or 2");
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ValidationError("conv channel counts must be >= 1");
  const std::int64_t k = spec.kernel;
  weight = Parameter<T>(name + ".weight", {spec.out_channels, spec.in_channels, k, k, k});
  if (spec.bias) bias = Parameter<T>(name + ".bias", {spec.out_channels});
}

template <typename T>
Extent3 Conv3d<T>::output_extent(const Extent3& in) const {
  const int p = spec_.kernel / 2;
  Extent3 out;
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * p - spec_.kernel) / spec_.stride + 1;
  return out;
}

template <typename T>
void Conv3d<T>::init(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kernel * spec_.kernel * spec_.kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& w : weight.value) w = static_cast<T>(dist(rng));
  if (bias) std::fill(bias->value.begin(), bias->value.end(), T(0));
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x) const {
  if (x.channels != spec_.in_channels) {
    throw ShapeError(weight.name + ": expected " + std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(x.channels));
  }
  const ConvGeometry g{x.spatial, output_extent(x.spatial), spec_.kernel, spec_.stride, spec_.kernel / 2};
  Tensor<T> y(x.batch, spec_.out_channels, g.out);
  const std::int64_t cin = spec_.in_channels, cout = spec_.out_channels;
  const std::int64_t kdim = cin * spec_.kernel * spec_.kernel * spec_.kernel;
  const std::int64_t vout = g.out.voxels();
  const Eigen::Map<const Mat<T>> wt(weight.value.data(), kdim, cout);

  for (std::int64_t n = 0; n < x.batch; ++n) {
    if (spec_.kernel == 1 && spec_.stride == 1) {
      ConstStridedMap<T> xin(x.plane(n, 0), vout, cin, Eigen::OuterStride<>(vout));
      StridedMap<T> yo(y.plane(n, 0), vout, cout, Eigen::OuterStride<>(vout));
      yo.noalias() = xin * wt;
    } else {
      const std::int64_t per_plane = g.plane_out() * kdim;
      const std::int64_t nz_chunk = std::clamp<std::int64_t>(kColumnBudget / per_plane, 1, g.out.z);
      auto& col = scratch<T>(static_cast<std::size_t>(nz_chunk * per_plane));
      for (std::int64_t z0 = 0; z0 < g.out.z; z0 += nz_chunk) {
        const std::int64_t nz = std::min(nz_chunk, g.out.z - z0);
        const std::int64_t rows = nz * g.plane_out();
        im2col(x.plane(n, 0), spec_.in_channels, g, z0, nz, col.data());
        const Eigen::Map<const Mat<T>> colt(col.data(), rows, kdim);
        StridedMap<T> yo(y.plane(n, 0) + z0 * g.plane_out(), rows, cout, Eigen::OuterStride<>(vout));
        yo.noalias() = colt * wt;
      }
    }
    if (bias) {
      for (std::int64_t c = 0; c < cout; ++c) {
        T* p = y.plane(n, c);
        const T b = bias->value[static_cast<std::size_t>(c)];
        for (std::int64_t v = 0; v < vout; ++v) p[v] += b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy) {
  const ConvGeometry g{x.spatial, output_extent(x.spatial), spec_.kernel, spec_.stride, spec_.kernel / 2};
  if (!(dy.spatial == g.out) || dy.channels != spec_.out_channels || dy.batch != x.batch) {
    throw ShapeError(weight.name + ": gradient shape " + dy.shape_string() + " does not match output");
  }
  Tensor<T> dx(x.batch, x.channels, x.spatial);
  const std::int64_t cin = spec_.in_channels, cout = spec_.out_channels;
  const std::int64_t kdim = cin * spec_.kernel * spec_.kernel * spec_.kernel;
  const std::int64_t vout = g.out.voxels();
  const std::int64_t vin = g.in.voxels();
  const Eigen::Map<const Mat<T>> wt(weight.value.data(), kdim, cout);
  Eigen::Map<Mat<T>> dwt(weight.grad.data(), kdim, cout);

  for (std::int64_t n = 0; n < x.batch; ++n) {
    if (spec_.kernel == 1 && spec_.stride == 1) {
      ConstStridedMap<T> xin(x.plane(n, 0), vin, cin, Eigen::OuterStride<>(vin));
      ConstStridedMap<T> dyt(dy.plane(n, 0), vout, cout, Eigen::OuterStride<>(vout));
      StridedMap<T> dxt(dx.plane(n, 0), vin, cin, Eigen::OuterStride<>(vin));
      dwt.noalias() += xin.transpose() * dyt;
      dxt.noalias() = dyt * wt.transpose();
    } else {
      const std::int64_t per_plane = g.plane_out() * kdim;
      const std::int64_t nz_chunk = std::clamp<std::int64_t>(kColumnBudget / per_plane, 1, g.out.z);
      std::vector<T> col(static_cast<std::size_t>(nz_chunk * per_plane));
      std::vector<T> dcol(col.size());
      for (std::int64_t z0 = 0; z0 < g.out.z; z0 += nz_chunk) {
        const std::int64_t nz = std::min(nz_chunk, g.out.z - z0);
        const std::int64_t rows = nz * g.plane_out();
        im2col(x.plane(n, 0), spec_.in_channels, g, z0, nz, col.data());
        const Eigen::Map<const Mat<T>> colt(col.data(), rows, kdim);
        ConstStridedMap<T> dyt(dy.plane(n, 0) + z0 * g.plane_out(), rows, cout, Eigen::OuterStride<>(vout));
        dwt.noalias() += colt.transpose() * dyt;
        Eigen::Map<Mat<T>> dcolt(dcol.data(), rows, kdim);
        dcolt.noalias() = dyt * wt.transpose();
        col2im(dcol.data(), spec_.in_channels, g, z0, nz, dx.plane(n, 0));
      }
    }
    if (bias) {
      for (std::int64_t c = 0; c < cout; ++c) {
        const T* p = dy.plane(n, c);
        double acc = 0.0;
        for (std::int64_t v = 0; v < vout; ++v) acc += p[v];
        bias->grad[static_cast<std::size_t>(c)] += static_cast<T>(acc);
      }
    }
  }
  return dx;
}

template <typename T>
InstanceNorm<T>::InstanceNorm(const std::string& name, int channels, double eps)
    : gamma(name + ".weight", {channels}), beta(name + ".bias", {channels}), eps_(eps) {
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
}

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const Tensor<T>& x, NormStats* stats) const {
  if (static_cast<std::size_t>(x.channels) != gamma.numel()) {
    throw ShapeError(gamma.name + ": channel count mismatch");
  }
  Tensor<T> y(x.batch, x.channels, x.spatial);
  const std::int64_t v = x.voxels();
  if (stats) {
    stats->mean.assign(static_cast<std::size_t>(x.batch * x.channels), 0.0);
    stats->invstd.assign(stats->mean.size(), 0.0);
  }
  for (std::int64_t n = 0; n < x.batch; ++n) {
    for (std::int64_t c = 0; c < x.channels; ++c) {
      const T* src = x.plane(n, c);
      double sum = 0.0;
      for (std::int64_t i = 0; i < v; ++i) sum += src[i];
      const double mean = sum / static_cast<double>(v);
      double sq = 0.0;
      for (std::int64_t i = 0; i < v; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
      const double invstd = 1.0 / std::sqrt(sq / static_cast<double>(v) + eps_);
      const double scale = invstd * gamma.value[static_cast<std::size_t>(c)];
      const double shift = beta.value[static_cast<std::size_t>(c)] - mean * scale;
      T* dst = y.plane(n, c);
      for (std::int64_t i = 0; i < v; ++i) dst[i] = static_cast<T>(src[i] * scale + shift);
      if (stats) {
        stats->mean[static_cast<std::size_t>(n * x.channels + c)] = mean;
        stats->invstd[static_cast<std::size_t>(n * x.channels + c)] = invstd;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const Tensor<T>& x, const NormStats& stats, const Tensor<T>& dy) {
  Tensor<T> dx(x.batch, x.channels, x.spatial);
  const std::int64_t v = x.voxels();
  const double inv_v = 1.0 / static_cast<double>(v);
  for (std::int64_t n = 0; n < x.batch; ++n) {
    for (std::int64_t c = 0; c < x.channels; ++c) {
      const auto idx = static_cast<std::size_t>(n * x.channels + c);
      const double mean = stats.mean[idx];
      const double invstd = stats.invstd[idx];
      const double g = gamma.value[static_cast<std::size_t>(c)];
      const T* xs = x.plane(n, c);
      const T* gy = dy.plane(n, c);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::int64_t i = 0; i < v; ++i) {
        const double xhat = (xs[i] - mean) * invstd;
        sum_dy += gy[i];
        sum_dy_xhat += gy[i] * xhat;
      }
      gamma.grad[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
      beta.grad[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
      const double m1 = sum_dy * inv_v;
      const double m2 = sum_dy_xhat * inv_v;
      T* out = dx.plane(n, c);
      for (std::int64_t i = 0; i < v; ++i) {
        const double xhat = (xs[i] - mean) * invstd;
        out[i] = static_cast<T>(g * invstd * (gy[i] - m1 - xhat * m2));
      }
    }
  }
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& v : x.data) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
  }
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  const std::int64_t planes = x.batch * x.channels;
  Extent3 d = x.spatial;
  std::vector<T> buf = upsample_axis(x.data, planes, d, 0);
  d.x *= 2;
  buf = upsample_axis(buf, planes, d, 1);
  d.y *= 2;
  buf = upsample_axis(buf, planes, d, 2);
  d.z *= 2;
  Tensor<T> y;
  y.batch = x.batch;
  y.channels = x.channels;
  y.spatial = d;
  y.data = std::move(buf);
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy, const Extent3& input_extent) {
  const std::int64_t planes = dy.batch * dy.channels;
  const Extent3 dz{input_extent.x * 2, input_extent.y * 2, input_extent.z};
  const Extent3 dyx{input_extent.x * 2, input_extent.y, input_extent.z};
  if (!(dy.spatial == Extent3{input_extent.x * 2, input_extent.y * 2, input_extent.z * 2})) {
    throw ShapeError("upsample gradient has unexpected extent");
  }
  std::vector<T> buf = upsample_axis_adjoint(dy.data, planes, dz, 2);
  buf = upsample_axis_adjoint(buf, planes, dyx, 1);
  buf = upsample_axis_adjoint(buf, planes, input_extent, 0);
  Tensor<T> dx;
  dx.batch = dy.batch;
  dx.channels = dy.channels;
  dx.spatial = input_extent;
  dx.data = std::move(buf);
  return dx;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("cannot add tensors " + a.shape_string() + " and " + b.shape_string());
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> p(logits.batch, logits.channels, logits.spatial);
  const std::int64_t v = logits.voxels();
  const std::int64_t c = logits.channels;
  std::vector<double> tmp(static_cast<std::size_t>(c));
  for (std::int64_t n = 0; n < logits.batch; ++n) {
    const T* src = logits.sample(n);
    T* dst = p.sample(n);
    for (std::int64_t i = 0; i < v; ++i) {
      double m = src[i];
      for (std::int64_t k = 1; k < c; ++k) m = std::max<double>(m, src[k * v + i]);
      double sum = 0.0;
      for (std::int64_t k = 0; k < c; ++k) {
        tmp[k] = std::exp(static_cast<double>(src[k * v + i]) - m);
        sum += tmp[k];
      }
      for (std::int64_t k = 0; k < c; ++k) dst[k * v + i] = static_cast<T>(tmp[k] / sum);
    }
  }
  return p;
}

#define STROKESEG_INSTANTIATE(T)                                                 \
  template class Conv3d<T>;                                                      \
  template class InstanceNorm<T>;                                                \
  template void relu_inplace<T>(Tensor<T>&);                                     \
  template void relu_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);          \
  template Tensor<T> upsample2x<T>(const Tensor<T>&);                            \
  template Tensor<T> upsample2x_backward<T>(const Tensor<T>&, const Extent3&);   \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);

STROKESEG_INSTANTIATE(float)
STROKESEG_INSTANTIATE(double)

#undef STROKESEG_INSTANTIATE

}  // namespace strokeseg::nn
