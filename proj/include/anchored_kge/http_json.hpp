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

#include <chrono>
#include <memory>
#include <string>

#include <json.hpp>

namespace anchored_kge {

struct RetryPolicy {
  int max_retries = 3;  // attempts = 1 + max_retries
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
};

struct HttpOptions {
  std::string base_url;  // e.g. "https://api.openai.com/v1"
  std::string api_key;   // sent as a Bearer token when non-empty
  RetryPolicy retry;
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{120};
};

// JSON-over-HTTP POST with exponential backoff. 5xx, 408, 429 and
// connection failures are retried; any other 4xx raises RequestError at once.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(HttpOptions options);
  ~JsonHttpClient();
  JsonHttpClient(const JsonHttpClient&) = delete;
  JsonHttpClient& operator=(const JsonHttpClient&) = delete;

  nlohmann::json post(const std::string& path, const nlohmann::json& body);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace anchored_kge
