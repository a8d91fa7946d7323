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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "anchored_kge/http_json.hpp"

#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/error.hpp"

namespace anchored_kge {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw RequestError(0, "endpoint URL lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw RequestError(0, "unsupported endpoint scheme: " + scheme);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  if (out.origin.size() <= scheme_end + 3) throw RequestError(0, "endpoint URL lacks a host: " + url);
  if (path_start != std::string::npos) out.prefix = url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

bool retryable_status(int status) { return status >= 500 || status == 408 || status == 429; }

}  // namespace

struct JsonHttpClient::Impl {
  HttpOptions options;
  SplitUrl url;
  std::mutex mu;  // httplib::Client is not safe for concurrent requests
  httplib::Client client;

  explicit Impl(HttpOptions o)
      : options(std::move(o)), url(split_url(options.base_url)), client(url.origin) {
    client.set_connection_timeout(options.connect_timeout);
    client.set_read_timeout(options.read_timeout);
    client.set_keep_alive(true);
  }
};

JsonHttpClient::JsonHttpClient(HttpOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

JsonHttpClient::~JsonHttpClient() = default;

nlohmann::json JsonHttpClient::post(const std::string& path, const nlohmann::json& body) {
  const std::string full_path = impl_->url.prefix + path;
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (!impl_->options.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + impl_->options.api_key);
  }
  const RetryPolicy& retry = impl_->options.retry;
  auto backoff = retry.initial_backoff;
  std::string last_failure;
  for (int attempt = 0; attempt <= retry.max_retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("POST {}: {}; retry {}/{} in {} ms", full_path, last_failure, attempt,
                   retry.max_retries, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * retry.backoff_multiplier));
    }
    httplib::Result res;
    {
      std::lock_guard lock(impl_->mu);
      res = impl_->client.Post(full_path, headers, payload, "application/json");
    }
    if (!res) {
      last_failure = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status >= 200 && status < 300) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw RequestError(status, fmt::format("POST {}: unparseable response: {}", full_path, e.what()));
      }
    }
    if (!retryable_status(status)) {
      throw RequestError(status, fmt::format("POST {} failed with HTTP {}: {}", full_path, status,
                                             res->body.substr(0, 500)));
    }
    last_failure = fmt::format("HTTP {}", status);
  }
  throw TransientError(fmt::format("POST {}: retry budget exhausted after {} attempt(s); last: {}",
                                   full_path, retry.max_retries + 1, last_failure));
}

}  // namespace anchored_kge
