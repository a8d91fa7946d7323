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

// Fixtures shared by the unit tests and the acceptance runner.
#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <optional>
#include <tuple>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/util.hpp"

namespace akge_test {

namespace fs = std::filesystem;
using namespace anchored_kge;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            fmt::format("akge-{}-{}-{}", ::getpid(), counter.fetch_add(1), std::random_device{}());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Vocabs make_vocabs(std::vector<std::string> entities, std::vector<std::string> relations) {
  return {std::make_shared<const Vocabulary>(std::move(entities)),
          std::make_shared<const Vocabulary>(std::move(relations))};
}

// 4 types x 50 entities; relations only link distinct types, so no entity is
// both head and tail of the same relation.

inline TripleSet typed_kg(std::uint64_t seed, std::size_t per_type = 50, std::size_t num_triples = 1000) {
  const std::vector<std::pair<int, int>> pairs = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
  std::vector<std::string> ents, rels;
  for (int t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < per_type; ++i) ents.push_back(fmt::format("T{}::e{:03}", t, i));
  }
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    rels.push_back(fmt::format("rel{}::T{}:T{}", r, pairs[r].first, pairs[r].second));
  }
  auto vocabs = make_vocabs(ents, rels);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, per_type - 1);
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> seen;
  std::vector<Triple> out;
  const std::size_t per_rel = num_triples / pairs.size();
  for (std::uint32_t r = 0; r < pairs.size(); ++r) {
    std::size_t made = 0;
    while (made < per_rel) {
      const auto h = static_cast<std::uint32_t>(pairs[r].first * per_type + pick(rng));
      const auto t = static_cast<std::uint32_t>(pairs[r].second * per_type + pick(rng));
      if (seen.insert({h, r, t}).second) {
        out.push_back({h, r, t});
        ++made;
      }
    }
  }
  return TripleSet(std::move(out), Split::kTrain, vocabs);
}

// Compounds and diseases in clusters; treatment edges stay inside a cluster.
struct ClusteredKg {
  TripleSet train;
  TripleSet test;
  std::vector<int> cluster;  // per entity
  std::size_t clusters = 0;
};

inline ClusteredKg clustered_kg(std::uint64_t seed, std::size_t clusters = 10, std::size_t per_cluster = 50,
                                std::size_t edges_per_compound = 3, double test_fraction = 0.2) {
  const std::size_t half = per_cluster / 2;
  std::vector<std::string> ents;
  std::vector<int> cluster;
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t i = 0; i < half; ++i) {
      ents.push_back(fmt::format("Compound::c{:02}_{:02}", c, i));
      cluster.push_back(static_cast<int>(c));
    }
    for (std::size_t i = 0; i < per_cluster - half; ++i) {
      ents.push_back(fmt::format("Disease::d{:02}_{:02}", c, i));
      cluster.push_back(static_cast<int>(c));
    }
  }
  auto vocabs = make_vocabs(ents, {"treats::Compound:Disease"});
  std::mt19937_64 rng(seed);
  std::vector<Triple> all;
  for (std::size_t c = 0; c < clusters; ++c) {
    const auto base = static_cast<std::uint32_t>(c * per_cluster);
    std::vector<std::uint32_t> diseases;
    for (std::size_t i = half; i < per_cluster; ++i) diseases.push_back(base + static_cast<std::uint32_t>(i));
    for (std::size_t i = 0; i < half; ++i) {
      std::shuffle(diseases.begin(), diseases.end(), rng);
      for (std::size_t k = 0; k < edges_per_compound; ++k) {
        all.push_back({base + static_cast<std::uint32_t>(i), 0, diseases[k]});
      }
    }
  }
  std::shuffle(all.begin(), all.end(), rng);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(all.size()));
  std::vector<Triple> test(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<Triple> train(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  return {TripleSet(std::move(train), Split::kTrain, vocabs), TripleSet(std::move(test), Split::kTest, vocabs),
          std::move(cluster), clusters};
}

// Deterministic stand-in for a text embedding: unit-scale floats from a hash.
inline std::vector<float> hash_embedding(const std::string& text, std::size_t dim) {
  std::seed_seq seq(text.begin(), text.end());
  std::mt19937 rng(seq);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

// Minimal chat/embedding server speaking the OpenAI-compatible JSON shapes.
class MockLlmServer {
 public:
  explicit MockLlmServer(std::size_t embed_dim = 16) : embed_dim_(embed_dim) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      std::string prompt = body.at("messages").at(0).at("content");
      {
        std::lock_guard lock(mu_);
        ++chat_requests_;
        chat_bodies_.push_back(req.body);
        if (fail_next_ > 0) {
          --fail_next_;
          res.status = 503;
          return;
        }
      }
      const auto text = fmt::format("Summary {} of the entity: background uses and clinical relevance noted here",
                                    sha256_hex(prompt).substr(0, 8));
      nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
      res.set_content(out.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mu_);
        ++embed_requests_;
        embed_bodies_.push_back(req.body);
      }
      nlohmann::json out = {
          {"data", {{{"embedding", hash_embedding(body.at("input").get<std::string>(), embed_dim_)}}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockLlmServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }
  std::size_t chat_requests() const { std::lock_guard lock(mu_); return chat_requests_; }
  std::size_t embed_requests() const { std::lock_guard lock(mu_); return embed_requests_; }
  std::vector<std::string> chat_bodies() const { std::lock_guard lock(mu_); return chat_bodies_; }
  std::vector<std::string> embed_bodies() const { std::lock_guard lock(mu_); return embed_bodies_; }
  void fail_next(int n) { std::lock_guard lock(mu_); fail_next_ = n; }
  void reset_counts() {
    std::lock_guard lock(mu_);
    chat_requests_ = embed_requests_ = 0;
    chat_bodies_.clear();
    embed_bodies_.clear();
  }

 private:
  std::size_t embed_dim_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::size_t chat_requests_ = 0, embed_requests_ = 0;
  int fail_next_ = 0;
  std::vector<std::string> chat_bodies_, embed_bodies_;
};

// Sets an environment variable for the scope of the object.
class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) ::setenv(name, value, 1);
    else ::unsetenv(name);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace akge_test
