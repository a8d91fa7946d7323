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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace anchored_kge {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr const char* kApiKeyEnv = "ANCHORED_KGE_API_KEY";

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitDivergence = 3,
};

// Provenance record; written exactly once, on success or failure.
class RunManifest {
 public:
  explicit RunManifest(std::string command, std::vector<std::string> args);
  ~RunManifest();
  RunManifest(const RunManifest&) = delete;
  RunManifest& operator=(const RunManifest&) = delete;

  void set_path(std::filesystem::path path) { path_ = std::move(path); }
  void set_config_hash(std::string hash) { body_["config_hash"] = std::move(hash); }
  void add_seed(const std::string& name, std::uint64_t seed) { body_["seeds"][name] = seed; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set(const std::string& key, nlohmann::json value) { body_[key] = std::move(value); }

  // Writes the manifest (if a path was set). Later calls are no-ops.
  void finish(int exit_code, const std::string& status);
  const nlohmann::json& body() const noexcept { return body_; }

 private:
  std::optional<std::filesystem::path> path_;
  nlohmann::json body_;
  bool written_ = false;
};

// Entry point behind the `anchored-kge` binary. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace anchored_kge
