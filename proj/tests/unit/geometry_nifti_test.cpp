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

#include "strokeseg/errors.hpp"
#include "strokeseg/nifti.hpp"
#include "unit/test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

using namespace strokeseg;
using testutil::TempDir;

namespace {

// Minimal single-file NIfTI-1 writer with selectable byte order, used to
// build inputs the library's own writer never produces.
class RawNifti {
 public:
  explicit RawNifti(bool big_endian) : big_(big_endian), bytes_(352, 0) {
    put<std::int32_t>(0, 348);
    put<float>(108, 352.0f);
    std::memcpy(&bytes_[344], "n+1\0", 4);
    put<float>(112, 1.0f);
  }
  // d[0] is the rank, as in the header's dim field.
  RawNifti& dims(std::vector<std::int16_t> d) {
    for (std::size_t i = 0; i < d.size(); ++i) put<std::int16_t>(40 + 2 * i, d[i]);
    return *this;
  }
  RawNifti& type(std::int16_t datatype, std::int16_t bitpix) {
    put<std::int16_t>(70, datatype);
    put<std::int16_t>(72, bitpix);
    return *this;
  }
  RawNifti& scaling(float slope, float inter) {
    put<float>(112, slope);
    put<float>(116, inter);
    return *this;
  }
  // sform rows: world = S * [i j k 1].
  RawNifti& sform(const std::array<float, 12>& rows) {
    put<std::int16_t>(254, 1);
    for (int i = 0; i < 12; ++i) put<float>(280 + 4 * i, rows[i]);
    return *this;
  }
  template <typename V>
  RawNifti& payload(const std::vector<V>& values) {
    for (V v : values) {
      const std::size_t at = bytes_.size();
      bytes_.resize(at + sizeof(V));
      put<V>(at, v);
    }
    return *this;
  }
  void write(const std::filesystem::path& p) const {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes_.data()), bytes_.size());
  }

 private:
  template <typename V>
  void put(std::size_t offset, V v) {
    unsigned char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    if (big_) std::reverse(b, b + sizeof(V));
    std::memcpy(&bytes_[offset], b, sizeof(V));
  }
  bool big_;
  std::vector<unsigned char> bytes_;
};

Geometry oblique_grid() {
  Geometry g = testutil::grid(5, 4, 3, 1.5, 2.0, 3.25);
  g.origin = Vec3(-10.5, 20.25, 3.0);
  return g;
}

ImageVolume ramp_volume(const Geometry& g) {
  ImageVolume v(g);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = 0.5 * static_cast<double>(i) - 7.0;
  return v;
}

}  // namespace

TEST(Geometry, ValidateRejectsBadGrids) {
  Geometry g = testutil::grid(2, 2, 2);
  EXPECT_NO_THROW(g.validate());
  g.spacing[1] = 0.0;
  EXPECT_THROW(g.validate(), ValidationError);
  g = testutil::grid(0, 2, 2);
  EXPECT_THROW(g.validate(), ValidationError);
}

TEST(Geometry, SameGridUsesTolerance) {
  Geometry a = testutil::grid(4, 4, 4), b = a;
  b.origin[0] += 5e-5;
  EXPECT_TRUE(same_grid(a, b, 1e-4));
  EXPECT_FALSE(same_grid(a, b, 1e-6));
  b = a;
  b.dims.z = 5;
  EXPECT_FALSE(same_grid(a, b, 1.0));
}

TEST(Geometry, IndexToWorldAppliesSpacingThenDirection) {
  Geometry g = testutil::grid(3, 3, 3, 2.0, 3.0, 4.0);
  g.origin = Vec3(1, 2, 3);
  g.direction = Mat3::Identity();
  g.direction(0, 0) = -1;
  const Vec3 w = g.index_to_world(Vec3(1, 1, 1));
  EXPECT_DOUBLE_EQ(w.x(), -1.0);
  EXPECT_DOUBLE_EQ(w.y(), 5.0);
  EXPECT_DOUBLE_EQ(w.z(), 7.0);
}

TEST(Nifti, Float64RoundTripIsBitExact) {
  TempDir dir("nifti");
  const auto v = ramp_volume(oblique_grid());
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    io::save_volume(v, dir / name);
    const auto back = io::load_volume(dir / name);
    EXPECT_EQ(back.data, v.data) << name;
    EXPECT_TRUE(same_grid(back.geom, v.geom, 1e-5)) << name;
  }
}

TEST(Nifti, IntegerStorageRoundTrip) {
  TempDir dir("nifti");
  ImageVolume v(testutil::grid(3, 3, 2));
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<double>(i) * 100 - 500;
  io::save_volume(v, dir / "i16.nii.gz", io::StorageType::Int16);
  io::save_volume(v, dir / "i32.nii.gz", io::StorageType::Int32);
  EXPECT_EQ(io::load_volume(dir / "i16.nii.gz").data, v.data);
  EXPECT_EQ(io::load_volume(dir / "i32.nii.gz").data, v.data);
}

TEST(Nifti, MaskRoundTripAndThreshold) {
  TempDir dir("nifti");
  std::mt19937_64 rng(1);
  const auto m = testutil::random_mask(testutil::grid(6, 5, 4), 0.3, rng);
  io::save_volume(m, dir / "m.nii.gz");
  EXPECT_EQ(io::load_mask(dir / "m.nii.gz").labels, m.labels);

  ImageVolume soft(testutil::grid(3, 1, 1));
  soft.data = {0.4, 0.6, 2.0};
  io::save_volume(soft, dir / "soft.nii.gz", io::StorageType::Float32);
  EXPECT_EQ(io::load_mask(dir / "soft.nii.gz").labels, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Nifti, MissingFileIsLoadError) {
  EXPECT_THROW(io::load_volume("/nonexistent/strokeseg/x.nii.gz"), LoadError);
}

TEST(Nifti, GarbageIsFormatError) {
  TempDir dir("nifti");
  std::mt19937_64 rng(2);
  std::vector<char> junk(1000);
  for (auto& c : junk) c = static_cast<char>(rng());
  std::ofstream(dir / "junk.nii", std::ios::binary).write(junk.data(), junk.size());
  EXPECT_THROW(io::load_volume(dir / "junk.nii"), FormatError);
  std::ofstream(dir / "short.nii") << "abc";
  EXPECT_THROW(io::load_volume(dir / "short.nii"), FormatError);
}

TEST(Nifti, TruncatedPayloadIsFormatError) {
  TempDir dir("nifti");
  RawNifti(false).dims({3, 4, 4, 4}).type(16, 32).payload(std::vector<float>(10, 1.0f)).write(dir / "t.nii");
  EXPECT_THROW(io::load_volume(dir / "t.nii"), FormatError);
}

TEST(Nifti, UnwritablePathIsIoError) {
  TempDir dir("nifti");
  std::ofstream(dir / "file") << "x";
  const ImageVolume v(testutil::grid(2, 2, 2));
  EXPECT_THROW(io::save_volume(v, dir / "file" / "sub" / "v.nii.gz"), IoError);
}

TEST(Nifti, FourDimensionalHandling) {
  TempDir dir("nifti");
  RawNifti(false).dims({4, 2, 2, 2, 2}).type(2, 8).payload(std::vector<std::uint8_t>(16, 1)).write(dir / "t2.nii");
  EXPECT_THROW(io::load_volume(dir / "t2.nii"), ShapeError);
  RawNifti(false).dims({4, 2, 2, 2, 1}).type(2, 8).payload(std::vector<std::uint8_t>(8, 1)).write(dir / "t1.nii");
  const auto v = io::load_volume(dir / "t1.nii");
  EXPECT_EQ(v.dims(), (Extent3{2, 2, 2}));
}

TEST(Nifti, BigEndianMatchesLittleEndian) {
  TempDir dir("nifti");
  const std::vector<std::int16_t> values{1, -2, 300, 4, 5, -600, 7, 8};
  const std::array<float, 12> s{2, 0, 0, 10, 0, 3, 0, 20, 0, 0, 4, 30};
  RawNifti(false).dims({3, 2, 2, 2}).type(4, 16).sform(s).payload(values).write(dir / "le.nii");
  RawNifti(true).dims({3, 2, 2, 2}).type(4, 16).sform(s).payload(values).write(dir / "be.nii");
  const auto le = io::load_volume(dir / "le.nii");
  const auto be = io::load_volume(dir / "be.nii");
  EXPECT_EQ(le.data, be.data);
  EXPECT_EQ(le.data, std::vector<double>(values.begin(), values.end()));
  EXPECT_TRUE(same_grid(le.geom, be.geom, 0.0));
  EXPECT_DOUBLE_EQ(be.geom.spacing.y(), 3.0);
  EXPECT_DOUBLE_EQ(be.geom.origin.z(), 30.0);
}

TEST(Nifti, ScaleSlopeAndInterceptApplied) {
  TempDir dir("nifti");
  RawNifti(false).dims({3, 2, 1, 1}).type(2, 8).scaling(2.0f, -1.0f).payload(std::vector<std::uint8_t>{3, 5}).write(
      dir / "s.nii");
  EXPECT_EQ(io::load_volume(dir / "s.nii").data, (std::vector<double>{5.0, 9.0}));
}

TEST(Nifti, NanSamplesAreFormatError) {
  TempDir dir("nifti");
  RawNifti(false).dims({3, 2, 1, 1}).type(16, 32).payload(std::vector<float>{1.0f, NAN}).write(dir / "n.nii");
  EXPECT_THROW(io::load_volume(dir / "n.nii"), FormatError);
}

TEST(Nifti, ReorientationPreservesWorldPositions) {
  TempDir dir("nifti");
  // LPS-style axes with x and y swapped: voxel i runs along -y, j along -x.
  const std::array<float, 12> s{0, -2, 0, 50, -1, 0, 0, 40, 0, 0, 3, -5};
  std::vector<float> values(4 * 3 * 2);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i);
  RawNifti(false).dims({3, 4, 3, 2}).type(16, 32).sform(s).payload(values).write(dir / "lps.nii");

  const auto raw = io::load_volume(dir / "lps.nii", Modality::DWI, io::LoadOptions{false});
  const auto ras = io::load_volume(dir / "lps.nii", Modality::DWI);
  EXPECT_TRUE(ras.geom.direction.isApprox(Mat3::Identity(), 1e-12));
  EXPECT_EQ(ras.dims(), (Extent3{3, 4, 2}));
  EXPECT_EQ(ras.modality, Modality::DWI);
  for (std::int64_t k = 0; k < 2; ++k)
    for (std::int64_t j = 0; j < 3; ++j)
      for (std::int64_t i = 0; i < 4; ++i) {
        const Vec3 w = raw.geom.index_to_world(Vec3(i, j, k));
        const Vec3 idx = ras.geom.affine_linear().inverse() * (w - ras.geom.origin);
        const auto ri = std::llround(idx.x()), rj = std::llround(idx.y()), rk = std::llround(idx.z());
        ASSERT_NEAR((idx - Vec3(ri, rj, rk)).norm(), 0.0, 1e-9);
        ASSERT_EQ(ras.at(ri, rj, rk), raw.at(i, j, k));
      }
  EXPECT_TRUE(same_grid(io::load_geometry(dir / "lps.nii"), ras.geom, 0.0));
}

TEST(Nifti, SavedReorientedVolumeReloadsUnchanged) {
  TempDir dir("nifti");
  const auto v = ramp_volume(oblique_grid());
  io::save_volume(io::reorient_to_ras(v), dir / "r.nii.gz");
  const auto back = io::load_volume(dir / "r.nii.gz");
  EXPECT_EQ(back.data, v.data);
}
