// Copyright 2026 The anchored-kge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// "KGEV" binary vector files:
//   magic "KGEV" | u32 version (1) | u64 rows | u64 cols | rows*cols f32
// all little-endian, row-major, plus a sidecar "<file>.tsv" of row<TAB>label.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "anchored_kge/matrix.hpp"

namespace anchored_kge {

inline constexpr char kVectorMagic[4] = {'K', 'G', 'E', 'V'};
inline constexpr std::uint32_t kVectorVersion = 1;
inline constexpr std::size_t kVectorHeaderBytes = 4 + 4 + 8 + 8;

struct LabeledMatrix {
  Matrix<float> values;
  std::vector<std::string> labels;
};

std::filesystem::path sidecar_path(const std::filesystem::path& vectors);

// Atomic: both the vector file and its sidecar are written via rename.
void write_vector_file(const std::filesystem::path& path, const Matrix<float>& values,
                       std::span<const std::string> labels);

// Throws FormatError on bad magic/version, truncated payload, trailing bytes
// or a sidecar whose row count disagrees with the header.
LabeledMatrix read_vector_file(const std::filesystem::path& path);

}  // namespace anchored_kge
