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

#include "strokeseg/volume.hpp"

#include <filesystem>

namespace strokeseg::io {

/// On-disk sample type used when writing an ImageVolume.
enum class StorageType { UInt8, Int16, Int32, Float32, Float64 };

struct LoadOptions {
  /// Permute/flip voxel axes so the direction matrix is as close to identity
  /// as an axis permutation allows. Any residual oblique rotation is kept.
  bool reorient_to_ras = true;
};

/// Reads a NIfTI-1 file (.nii or .nii.gz, detected from content).
/// Throws LoadError (missing/unreadable), FormatError (bad header or payload),
/// ShapeError (4D with more than one frame).
ImageVolume load_volume(const std::filesystem::path& path, Modality modality = Modality::OTHER,
                        const LoadOptions& options = {});

/// Reads a label volume; every sample > 0.5 becomes 1, everything else 0.
SegmentationMask load_mask(const std::filesystem::path& path, const LoadOptions& options = {});

/// Reads only the header and returns the grid the volume would load onto.
Geometry load_geometry(const std::filesystem::path& path, const LoadOptions& options = {});

/// Writes a NIfTI-1 file; gzip compression when the path ends in ".gz".
/// Parent directories are created. Throws IoError when the path is unwritable.
void save_volume(const ImageVolume& vol, const std::filesystem::path& path,
                 StorageType storage = StorageType::Float64);
void save_volume(const SegmentationMask& mask, const std::filesystem::path& path);

/// Reorients an in-memory volume the same way load_volume does.
ImageVolume reorient_to_ras(const ImageVolume& vol);

}  // namespace strokeseg::io
