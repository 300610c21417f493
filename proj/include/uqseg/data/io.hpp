/* Copyright 2026 The uqseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>

#include "uqseg/core/tensor.hpp"

namespace uqseg::data {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};
/// Recognized but unsupported file variant (e.g. a detached NIfTI header).
class UnsupportedVariant : public FormatError {
 public:
  using FormatError::FormatError;
};
class UnsupportedDatatype : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

enum class NiftiType : short { uint8 = 2, int16 = 4, float32 = 16 };

struct NiftiVolume {
  Tensor volume;                             // shape is (dim[n], ..., dim[1]): x varies fastest
  std::array<double, 3> spacing{1, 1, 1};   // pixdim[1..3]
};

/// Single-file NIfTI-1 ("n+1") in little-endian byte order, plain or gzip.
/// Data types uint8, int16 and float32; at most three dimensions.
/// scl_slope/scl_inter are applied when the slope is non-zero. Orientation
/// and affine fields are ignored.
NiftiVolume read_nifti(const std::filesystem::path& path);

struct NiftiWriteOptions {
  NiftiType type = NiftiType::float32;
  std::array<double, 3> spacing{1, 1, 1};
  double scl_slope = 0.0;
  double scl_inter = 0.0;
};

/// Writes the subset read_nifti accepts. Values are stored as given (they are
/// the raw values, before any scaling). Paths ending in ".gz" are compressed.
void write_nifti(const std::filesystem::path& path, const Tensor& volume, const NiftiWriteOptions& options = {});

/// Raw tensor file: "UQTN", u32 version (1), u32 dtype (1 = float64),
/// u32 rank, u64 dims[rank], then little-endian payload.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace uqseg::data
