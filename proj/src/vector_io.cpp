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

#include "anchored_kge/vector_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"

namespace anchored_kge {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& vectors) {
  auto p = vectors;
  p += ".tsv";
  return p;
}

void write_vector_file(const std::filesystem::path& path, const Matrix<float>& values,
                       std::span<const std::string> labels) {
  if (labels.size() != values.rows()) {
    throw ShapeError(fmt::format("{} labels for {} rows", labels.size(), values.rows()));
  }
  write_atomically(
      path,
      [&](std::ostream& out) {
        out.write(kVectorMagic, 4);
        put_le<std::uint32_t>(out, kVectorVersion);
        put_le<std::uint64_t>(out, values.rows());
        put_le<std::uint64_t>(out, values.cols());
        if constexpr (std::endian::native == std::endian::little) {
          out.write(reinterpret_cast<const char*>(values.data().data()),
                    static_cast<std::streamsize>(values.data().size_bytes()));
        } else {
          for (float v : values.data()) put_le(out, v);
        }
      },
      true);
  write_atomically(sidecar_path(path), [&](std::ostream& out) {
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
  });
}

LabeledMatrix read_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vector file " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() < kVectorHeaderBytes || std::memcmp(bytes.data(), kVectorMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad KGEV header");
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kVectorVersion) {
    throw FormatError(fmt::format("{}: unsupported KGEV version {}", path.string(), version));
  }
  const auto rows = get_le<std::uint64_t>(bytes.data() + 8);
  const auto cols = get_le<std::uint64_t>(bytes.data() + 16);
  const auto payload = bytes.size() - kVectorHeaderBytes;
  if (cols != 0 && rows > payload / 4 / cols) {
    throw FormatError(fmt::format("{}: truncated payload", path.string()));
  }
  if (payload != rows * cols * 4) {
    throw FormatError(fmt::format("{}: payload is {} bytes, header implies {}", path.string(),
                                  payload, rows * cols * 4));
  }
  LabeledMatrix out{Matrix<float>(rows, cols), {}};
  const unsigned char* p = bytes.data() + kVectorHeaderBytes;
  for (auto& v : out.values.data()) {
    v = get_le<float>(p);
    p += 4;
  }

  const auto side = sidecar_path(path);
  std::ifstream tsv(side);
  if (!tsv) throw FormatError("missing sidecar " + side.string());
  std::string line;
  while (std::getline(tsv, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(side.string() + ": malformed row");
    if (line.substr(0, tab) != std::to_string(out.labels.size())) {
      throw FormatError(side.string() + ": rows out of order");
    }
    out.labels.push_back(line.substr(tab + 1));
  }
  if (out.labels.size() != rows) {
    throw FormatError(fmt::format("{}: {} labels for {} rows", side.string(), out.labels.size(), rows));
  }
  return out;
}

}  // namespace anchored_kge
