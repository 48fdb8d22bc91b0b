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

#include "strokeseg/synthetic.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/nifti.hpp"
#include "strokeseg/random.hpp"

#include <cstdio>
#include <random>
#include <vector>

namespace strokeseg::synth {

SyntheticCase make_case(const SyntheticOptions& opts, std::uint64_t seed) {
  if (!opts.dims.positive() || !(opts.spacing.minCoeff() > 0.0)) throw ValidationError("bad synthetic grid");
  if (opts.min_lesions < 0 || opts.max_lesions < opts.min_lesions) throw ValidationError("bad lesion count range");
  auto rng = make_stream(seed, StreamPurpose::Synthetic);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, opts.noise_std);

  Geometry g;
  g.dims = opts.dims;
  g.spacing = opts.spacing;
  const Vec3 extent_mm(opts.dims.x * opts.spacing.x(), opts.dims.y * opts.spacing.y(), opts.dims.z * opts.spacing.z());
  g.origin = -0.5 * extent_mm;

  SyntheticCase c{ImageVolume(g, 0.0, Modality::DWI), ImageVolume(g, 0.0, Modality::ADC), SegmentationMask(g)};

  // Brain: ellipsoid filling ~80% of the field of view, centred at 0 mm.
  const Vec3 semi = 0.4 * extent_mm;
  auto in_brain = [&](const Vec3& p) { return p.cwiseQuotient(semi).squaredNorm() <= 1.0; };

  struct Sphere {
    Vec3 centre;
    double radius;
  };
  std::vector<Sphere> lesions;
  const int count = opts.min_lesions + static_cast<int>(unit(rng) * (opts.max_lesions - opts.min_lesions + 1) * 0.999999);
  for (int l = 0; l < count; ++l) {
    const double r = opts.min_radius_mm + unit(rng) * (opts.max_radius_mm - opts.min_radius_mm);
    Vec3 centre;
    for (int tries = 0; tries < 100; ++tries) {
      for (int a = 0; a < 3; ++a) centre[a] = (2.0 * unit(rng) - 1.0) * std::max(0.0, semi[a] - r);
      if (in_brain(centre)) break;
    }
    lesions.push_back({centre, r});
  }

  const double dwi_tissue = 0.8 + 0.2 * unit(rng);
  const double adc_tissue = 0.8 + 0.2 * unit(rng);
  for (std::int64_t k = 0; k < g.dims.z; ++k) {
    for (std::int64_t j = 0; j < g.dims.y; ++j) {
      for (std::int64_t i = 0; i < g.dims.x; ++i) {
        const Vec3 p = g.index_to_world(Vec3(i, j, k));
        double dwi = 0.0, adc = 0.0;
        if (in_brain(p)) {
          dwi = dwi_tissue;
          adc = adc_tissue;
          for (const auto& s : lesions) {
            if ((p - s.centre).norm() <= s.radius) {
              dwi = 2.0;
              adc = 0.3;
              c.label.at(i, j, k) = 1;
            }
          }
          dwi += noise(rng);
          adc += noise(rng);
        }
        c.dwi.at(i, j, k) = dwi;
        c.adc.at(i, j, k) = adc;
      }
    }
  }
  return c;
}

io::DatasetManifest write_dataset(const std::filesystem::path& out_dir, int n, const SyntheticOptions& opts,
                                  std::uint64_t seed) {
  if (n < 0) throw ValidationError("case count must be >= 0");
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::absolute(out_dir).lexically_normal();
  io::DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "case_%03d", i);
    const auto c = make_case(opts, make_stream(seed, StreamPurpose::Synthetic, {static_cast<std::uint64_t>(i)})());
    io::CaseRecord r;
    r.case_id = id;
    r.dwi = dir / (std::string(id) + "_dwi.nii.gz");
    r.adc = dir / (std::string(id) + "_adc.nii.gz");
    r.label = dir / (std::string(id) + "_label.nii.gz");
    io::save_volume(c.dwi, r.dwi, io::StorageType::Float32);
    io::save_volume(c.adc, r.adc, io::StorageType::Float32);
    io::save_volume(c.label, *r.label);
    m.cases.push_back(std::move(r));
  }
  io::save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace strokeseg::synth
