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

#include "strokeseg/nifti.hpp"

#include "strokeseg/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>

namespace strokeseg {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::DWI: return "DWI";
    case Modality::ADC: return "ADC";
    case Modality::FLAIR: return "FLAIR";
    case Modality::OTHER: break;
  }
  return "OTHER";
}

std::int64_t SegmentationMask::foreground_count() const {
  return std::count_if(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; });
}

namespace io {
namespace {

struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope, scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

enum : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
  kInt64 = 1024,
  kUInt64 = 1280,
};

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T, std::size_t N>
void byteswap_array(T (&arr)[N]) {
  for (auto& v : arr) v = byteswap_value(v);
}

void byteswap_header(Nifti1Header& h) {
  h.sizeof_hdr = byteswap_value(h.sizeof_hdr);
  byteswap_array(h.dim);
  h.intent_code = byteswap_value(h.intent_code);
  h.datatype = byteswap_value(h.datatype);
  h.bitpix = byteswap_value(h.bitpix);
  byteswap_array(h.pixdim);
  h.vox_offset = byteswap_value(h.vox_offset);
  h.scl_slope = byteswap_value(h.scl_slope);
  h.scl_inter = byteswap_value(h.scl_inter);
  h.qform_code = byteswap_value(h.qform_code);
  h.sform_code = byteswap_value(h.sform_code);
  h.quatern_b = byteswap_value(h.quatern_b);
  h.quatern_c = byteswap_value(h.quatern_c);
  h.quatern_d = byteswap_value(h.quatern_d);
  h.qoffset_x = byteswap_value(h.qoffset_x);
  h.qoffset_y = byteswap_value(h.qoffset_y);
  h.qoffset_z = byteswap_value(h.qoffset_z);
  byteswap_array(h.srow_x);
  byteswap_array(h.srow_y);
  byteswap_array(h.srow_z);
}

struct GzCloser {
  void operator()(gzFile f) const {
    if (f != nullptr) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

GzHandle open_for_read(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw LoadError("cannot load volume: file not found: " + path.string());
  }
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw LoadError("cannot open volume: " + path.string());
  return f;
}

/// Reads up to `limit` bytes (or everything when limit is 0).
std::vector<unsigned char> read_bytes(const std::filesystem::path& path, std::size_t limit = 0) {
  GzHandle f = open_for_read(path);
  std::vector<unsigned char> buf;
  constexpr std::size_t kChunk = 1 << 20;
  while (limit == 0 || buf.size() < limit) {
    std::size_t want = kChunk;
    if (limit != 0) want = std::min(want, limit - buf.size());
    const std::size_t old = buf.size();
    buf.resize(old + want);
    const int got = gzread(f.get(), buf.data() + old, static_cast<unsigned>(want));
    if (got < 0) throw FormatError("corrupt compressed stream: " + path.string());
    buf.resize(old + static_cast<std::size_t>(got));
    if (static_cast<std::size_t>(got) < want) break;
  }
  return buf;
}

struct ParsedHeader {
  Nifti1Header hdr;
  bool swapped = false;
  Geometry geom;
  std::size_t bytes_per_voxel = 0;
  std::size_t data_offset = 0;
};

std::size_t bytes_for(std::int16_t datatype) {
  switch (datatype) {
    case kUInt8:
    case kInt8: return 1;
    case kInt16:
    case kUInt16: return 2;
    case kInt32:
    case kUInt32:
    case kFloat32: return 4;
    case kFloat64:
    case kInt64:
    case kUInt64: return 8;
    default: return 0;
  }
}

Mat3 quaternion_to_rotation(double b, double c, double d) {
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    const double n = std::sqrt(b * b + c * c + d * d);
    b /= n;
    c /= n;
    d /= n;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  Mat3 r;
  r << a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c,
      2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b,
      2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b;
  return r;
}

ParsedHeader parse_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < sizeof(Nifti1Header)) {
    throw FormatError("not a NIfTI-1 file (too short): " + path.string());
  }
  ParsedHeader p;
  std::memcpy(&p.hdr, bytes.data(), sizeof(Nifti1Header));
  Nifti1Header& h = p.hdr;
  if (h.sizeof_hdr != 348) {
    if (byteswap_value(h.sizeof_hdr) != 348) {
      throw FormatError("not a NIfTI-1 file (bad sizeof_hdr): " + path.string());
    }
    byteswap_header(h);
    p.swapped = true;
  }
  if (std::memcmp(h.magic, "n+1\0", 4) != 0) {
    throw FormatError("unsupported NIfTI magic (only single-file n+1 is read): " + path.string());
  }
  const int ndim = h.dim[0];
  if (ndim < 1 || ndim > 7) throw FormatError("invalid dim[0] in " + path.string());
  for (int a = 4; a <= ndim; ++a) {
    if (h.dim[a] > 1) {
      throw ShapeError("unsupported shape: volume has " + std::to_string(h.dim[a]) + " entries along axis " +
                       std::to_string(a) + " in " + path.string());
    }
  }
  for (int a = 0; a < 3; ++a) {
    const std::int64_t n = (a + 1 <= ndim) ? h.dim[a + 1] : 1;
    if (n < 1) throw FormatError("non-positive dimension in " + path.string());
    p.geom.dims[a] = n;
  }
  p.bytes_per_voxel = bytes_for(h.datatype);
  if (p.bytes_per_voxel == 0) {
    throw FormatError("unsupported NIfTI datatype " + std::to_string(h.datatype) + " in " + path.string());
  }
  if (!(h.vox_offset >= 348.0f)) throw FormatError("invalid vox_offset in " + path.string());
  p.data_offset = static_cast<std::size_t>(h.vox_offset);

  double unit = 1.0;
  switch (h.xyzt_units & 0x07) {
    case 1: unit = 1000.0; break;  // meters
    case 3: unit = 1e-3; break;    // microns
    default: break;
  }

  Mat3 linear = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
  if (h.sform_code > 0) {
    for (int j = 0; j < 3; ++j) {
      linear(0, j) = h.srow_x[j];
      linear(1, j) = h.srow_y[j];
      linear(2, j) = h.srow_z[j];
    }
    origin = Vec3(h.srow_x[3], h.srow_y[3], h.srow_z[3]);
  } else if (h.qform_code > 0) {
    const Mat3 r = quaternion_to_rotation(h.quatern_b, h.quatern_c, h.quatern_d);
    const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
    Vec3 sp(std::abs(h.pixdim[1]), std::abs(h.pixdim[2]), std::abs(h.pixdim[3]));
    Mat3 rq = r;
    rq.col(2) *= qfac;
    linear = rq * sp.asDiagonal();
    origin = Vec3(h.qoffset_x, h.qoffset_y, h.qoffset_z);
  } else {
    for (int a = 0; a < 3; ++a) {
      const double s = (a + 1 <= ndim) ? std::abs(h.pixdim[a + 1]) : 1.0;
      linear(a, a) = s > 0 ? s : 1.0;
    }
  }
  linear *= unit;
  origin *= unit;
  for (int j = 0; j < 3; ++j) {
    const double norm = linear.col(j).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw FormatError("degenerate affine in " + path.string());
    p.geom.spacing[j] = norm;
    p.geom.direction.col(j) = linear.col(j) / norm;
  }
  p.geom.origin = origin;
  try {
    p.geom.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string(e.what()) + " in " + path.string());
  }
  return p;
}

template <typename T>
void decode(const unsigned char* src, std::size_t n, bool swapped, std::vector<double>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swapped) v = byteswap_value(v);
    out[i] = static_cast<double>(v);
  }
}

struct PermutationPlan {
  std::array<int, 3> old_axis{0, 1, 2};  // new axis i reads old axis old_axis[i]
  std::array<bool, 3> flip{false, false, false};
  bool identity() const {
    return old_axis == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2];
  }
};

PermutationPlan plan_reorientation(const Mat3& direction) {
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  // perm[i] = old voxel axis mapped onto world axis i
  do {
    double score = 0.0;
    for (int i = 0; i < 3; ++i) score += std::abs(direction(i, perm[i]));
    if (score > best_score + 1e-12) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  PermutationPlan plan;
  plan.old_axis = best;
  for (int i = 0; i < 3; ++i) plan.flip[i] = direction(i, best[i]) < 0.0;
  return plan;
}

Geometry apply_plan(const Geometry& g, const PermutationPlan& plan) {
  Geometry out;
  const Mat3 linear = g.affine_linear();
  Vec3 origin = g.origin;
  for (int i = 0; i < 3; ++i) {
    const int j = plan.old_axis[i];
    out.dims[i] = g.dims[j];
    out.spacing[i] = g.spacing[j];
    Vec3 col = g.direction.col(j);
    if (plan.flip[i]) {
      origin += linear.col(j) * static_cast<double>(g.dims[j] - 1);
      col = -col;
    }
    out.direction.col(i) = col;
  }
  out.origin = origin;
  return out;
}

template <typename V>
std::vector<V> permute_samples(const std::vector<V>& src, const Extent3& old_dims, const Extent3& new_dims,
                               const PermutationPlan& plan) {
  std::vector<V> dst(src.size());
  std::array<std::int64_t, 3> old_idx{};
  std::int64_t out = 0;
  for (std::int64_t k = 0; k < new_dims.z; ++k) {
    for (std::int64_t j = 0; j < new_dims.y; ++j) {
      for (std::int64_t i = 0; i < new_dims.x; ++i, ++out) {
        const std::array<std::int64_t, 3> nv{i, j, k};
        for (int a = 0; a < 3; ++a) {
          const int oa = plan.old_axis[a];
          old_idx[oa] = plan.flip[a] ? (old_dims[oa] - 1 - nv[a]) : nv[a];
        }
        dst[out] = src[old_dims.index(old_idx[0], old_idx[1], old_idx[2])];
      }
    }
  }
  return dst;
}

ImageVolume read_volume(const std::filesystem::path& path, Modality modality) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  const ParsedHeader p = parse_header(bytes, path);
  const auto n = static_cast<std::size_t>(p.geom.dims.voxels());
  const std::size_t need = p.data_offset + n * p.bytes_per_voxel;
  if (bytes.size() < need) {
    throw FormatError("truncated NIfTI payload in " + path.string() + ": expected " + std::to_string(need) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  ImageVolume vol;
  vol.geom = p.geom;
  vol.modality = modality;
  const unsigned char* src = bytes.data() + p.data_offset;
  switch (p.hdr.datatype) {
    case kUInt8: decode<std::uint8_t>(src, n, p.swapped, vol.data); break;
    case kInt8: decode<std::int8_t>(src, n, p.swapped, vol.data); break;
    case kInt16: decode<std::int16_t>(src, n, p.swapped, vol.data); break;
    case kUInt16: decode<std::uint16_t>(src, n, p.swapped, vol.data); break;
    case kInt32: decode<std::int32_t>(src, n, p.swapped, vol.data); break;
    case kUInt32: decode<std::uint32_t>(src, n, p.swapped, vol.data); break;
    case kFloat32: decode<float>(src, n, p.swapped, vol.data); break;
    case kFloat64: decode<double>(src, n, p.swapped, vol.data); break;
    case kInt64: decode<std::int64_t>(src, n, p.swapped, vol.data); break;
    case kUInt64: decode<std::uint64_t>(src, n, p.swapped, vol.data); break;
    default: throw FormatError("unsupported datatype in " + path.string());
  }
  const double slope = p.hdr.scl_slope;
  const double inter = p.hdr.scl_inter;
  if (slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0)) {
    for (double& v : vol.data) v = v * slope + inter;
  }
  for (double v : vol.data) {
    if (std::isnan(v)) throw FormatError("volume contains NaN samples: " + path.string());
  }
  return vol;
}

Nifti1Header make_header(const Geometry& g, std::int16_t datatype, std::int16_t bitpix) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(g.dims.x);
  h.dim[2] = static_cast<std::int16_t>(g.dims.y);
  h.dim[3] = static_cast<std::int16_t>(g.dims.z);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
  for (int a = 4; a < 8; ++a) h.pixdim[a] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  std::strncpy(h.descrip, "strokeseg", sizeof(h.descrip) - 1);
  h.qform_code = 0;
  h.sform_code = 1;
  const Mat3 linear = g.affine_linear();
  for (int j = 0; j < 3; ++j) {
    h.srow_x[j] = static_cast<float>(linear(0, j));
    h.srow_y[j] = static_cast<float>(linear(1, j));
    h.srow_z[j] = static_cast<float>(linear(2, j));
  }
  h.srow_x[3] = static_cast<float>(g.origin[0]);
  h.srow_y[3] = static_cast<float>(g.origin[1]);
  h.srow_z[3] = static_cast<float>(g.origin[2]);
  std::memcpy(h.magic, "n+1\0", 4);
  return h;
}

void write_file(const std::filesystem::path& path, const Nifti1Header& h, const std::vector<unsigned char>& payload) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + path.string() + ": " + ec.message());
  }
  for (std::int64_t a = 1; a <= 3; ++a) {
    if (h.dim[a] <= 0) throw IoError("volume too large for NIfTI-1 (dims must fit int16): " + path.string());
  }
  std::vector<unsigned char> bytes(352 + payload.size(), 0);
  std::memcpy(bytes.data(), &h, sizeof(h));
  std::copy(payload.begin(), payload.end(), bytes.begin() + 352);

  const bool gz = path.extension() == ".gz";
  if (gz) {
    GzHandle f(gzopen(path.c_str(), "wb6"));
    if (!f) throw IoError("cannot write " + path.string());
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
      if (gzwrite(f.get(), bytes.data() + done, chunk) != static_cast<int>(chunk)) {
        throw IoError("write failed: " + path.string());
      }
      done += chunk;
    }
    if (gzclose(f.release()) != Z_OK) throw IoError("write failed: " + path.string());
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
  }
}

template <typename T>
std::vector<unsigned char> encode(const std::vector<double>& data) {
  std::vector<unsigned char> out(data.size() * sizeof(T));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const T v = static_cast<T>(data[i]);
    std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
  }
  return out;
}

}  // namespace

ImageVolume reorient_to_ras(const ImageVolume& vol) {
  const PermutationPlan plan = plan_reorientation(vol.geom.direction);
  if (plan.identity()) return vol;
  ImageVolume out;
  out.geom = apply_plan(vol.geom, plan);
  out.modality = vol.modality;
  out.data = permute_samples(vol.data, vol.geom.dims, out.geom.dims, plan);
  return out;
}

ImageVolume load_volume(const std::filesystem::path& path, Modality modality, const LoadOptions& options) {
  ImageVolume vol = read_volume(path, modality);
  if (options.reorient_to_ras) return reorient_to_ras(vol);
  return vol;
}

SegmentationMask load_mask(const std::filesystem::path& path, const LoadOptions& options) {
  const ImageVolume vol = load_volume(path, Modality::OTHER, options);
  SegmentationMask mask(vol.geom);
  for (std::size_t i = 0; i < vol.data.size(); ++i) mask.labels[i] = vol.data[i] > 0.5 ? 1 : 0;
  return mask;
}

Geometry load_geometry(const std::filesystem::path& path, const LoadOptions& options) {
  const ParsedHeader p = parse_header(read_bytes(path, sizeof(Nifti1Header)), path);
  if (!options.reorient_to_ras) return p.geom;
  return apply_plan(p.geom, plan_reorientation(p.geom.direction));
}

void save_volume(const ImageVolume& vol, const std::filesystem::path& path, StorageType storage) {
  vol.geom.validate();
  if (vol.data.size() != static_cast<std::size_t>(vol.geom.dims.voxels())) {
    throw ShapeError("volume data size does not match its dims");
  }
  switch (storage) {
    case StorageType::UInt8:
      write_file(path, make_header(vol.geom, kUInt8, 8), encode<std::uint8_t>(vol.data));
      break;
    case StorageType::Int16:
      write_file(path, make_header(vol.geom, kInt16, 16), encode<std::int16_t>(vol.data));
      break;
    case StorageType::Int32:
      write_file(path, make_header(vol.geom, kInt32, 32), encode<std::int32_t>(vol.data));
      break;
    case StorageType::Float32:
      write_file(path, make_header(vol.geom, kFloat32, 32), encode<float>(vol.data));
      break;
    case StorageType::Float64:
      write_file(path, make_header(vol.geom, kFloat64, 64), encode<double>(vol.data));
      break;
  }
}

void save_volume(const SegmentationMask& mask, const std::filesystem::path& path) {
  mask.geom.validate();
  if (mask.labels.size() != static_cast<std::size_t>(mask.geom.dims.voxels())) {
    throw ShapeError("mask label count does not match its dims");
  }
  write_file(path, make_header(mask.geom, kUInt8, 8),
             std::vector<unsigned char>(mask.labels.begin(), mask.labels.end()));
}

}  // namespace io
}  // namespace strokeseg
