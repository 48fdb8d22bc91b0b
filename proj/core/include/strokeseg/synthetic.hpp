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

#include "strokeseg/manifest.hpp"
#include "strokeseg/volume.hpp"

#include <cstdint>
#include <filesystem>

namespace strokeseg::synth {

/// Toy DWI/ADC pairs: an ellipsoidal "brain" with spherical lesions that are
/// bright on DWI and dark on ADC, plus Gaussian noise.
struct SyntheticOptions {
  Extent3 dims{32, 32, 24};
  Vec3 spacing{2.0, 2.0, 2.0};
  int min_lesions = 1;
  int max_lesions = 2;
  double min_radius_mm = 5.0;
  double max_radius_mm = 9.0;
  double noise_std = 0.05;
};

struct SyntheticCase {
  ImageVolume dwi;
  ImageVolume adc;
  SegmentationMask label;
};

SyntheticCase make_case(const SyntheticOptions& opts, std::uint64_t seed);

/// Writes `n` cases as `<dir>/<id>_{dwi,adc,label}.nii.gz` plus
/// `<dir>/manifest.json` (unsplit). Case ids are case_000, case_001, ...
io::DatasetManifest write_dataset(const std::filesystem::path& dir, int n, const SyntheticOptions& opts,
                                  std::uint64_t seed);

}  // namespace strokeseg::synth
