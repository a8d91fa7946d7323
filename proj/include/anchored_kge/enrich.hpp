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

// Text enrichment of KG entities: LLM descriptions, text embeddings of the
// entity name and its description, and the concatenated / sliced vectors
// used to anchor structural embeddings.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "anchored_kge/http_json.hpp"
#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/matrix.hpp"

namespace anchored_kge {

using TextVector = std::vector<float>;

enum class PromptVariant { kNoPrompt, kExpertPrompt, kStructuredPrompt };

std::string_view to_string(PromptVariant v);
PromptVariant parse_prompt_variant(std::string_view s);

// NoPrompt yields the bare name; the other two wrap it in a fixed template.
// Throws PreconditionError on an empty name.
std::string render_prompt(std::string_view entity_name, PromptVariant variant);

inline constexpr double kDefaultTemperature = 0.7;
inline constexpr double kLowTemperature = 0.1;

// ---------------------------------------------------------------- endpoints

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  virtual std::string complete(const std::string& model, const std::string& prompt,
                               double temperature) = 0;
};

class EmbeddingEndpoint {
 public:
  virtual ~EmbeddingEndpoint() = default;
  virtual TextVector embed(const std::string& model, const std::string& text) = 0;
};

// POST {base}/chat/completions, {model, messages:[{role:"user",content}], temperature}
class HttpChatEndpoint final : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(HttpOptions options) : client_(std::move(options)) {}
  std::string complete(const std::string& model, const std::string& prompt,
                       double temperature) override;

 private:
  JsonHttpClient client_;
};

// POST {base}/embeddings, {model, input}
class HttpEmbeddingEndpoint final : public EmbeddingEndpoint {
 public:
  explicit HttpEmbeddingEndpoint(HttpOptions options) : client_(std::move(options)) {}
  TextVector embed(const std::string& model, const std::string& text) override;

 private:
  JsonHttpClient client_;
};

nlohmann::json chat_request_body(const std::string& model, const std::string& prompt,
                                 double temperature);
nlohmann::json embedding_request_body(const std::string& model, const std::string& text);

// ---------------------------------------------------------------- caches

struct DescriptionRecord {
  std::string entity_label;
  PromptVariant variant = PromptVariant::kExpertPrompt;
  double temperature = kDefaultTemperature;
  std::string model;
  std::string text;
  std::string fetched_at;  // RFC 3339
};

nlohmann::json to_json(const DescriptionRecord& r);
DescriptionRecord description_from_json(const nlohmann::json& j);

// Append-only JSON Lines store keyed by (entity, variant, temperature,
// model). Every put rewrites the file through an atomic rename. Safe to share
// across fetch workers.
class DescriptionCache {
 public:
  // Loads `path` if it exists; an empty path gives an in-memory cache.
  explicit DescriptionCache(std::filesystem::path path = {});

  std::optional<DescriptionRecord> find(std::string_view entity_label, PromptVariant variant,
                                        double temperature, std::string_view model) const;
  void put(const DescriptionRecord& record);
  std::vector<DescriptionRecord> records() const;
  std::size_t size() const;

 private:
  static std::string key(std::string_view label, PromptVariant v, double temperature,
                         std::string_view model);
  void persist_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<DescriptionRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSON Lines store of {model, text_sha256, vector}, keyed by (model, sha256(text)).
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path = {});

  std::optional<TextVector> find(std::string_view model, std::string_view text) const;
  void put(std::string_view model, std::string_view text, const TextVector& vec);
  std::optional<std::size_t> dim(std::string_view model) const;
  std::size_t size() const;

 private:
  void persist_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
  std::unordered_map<std::string, TextVector> vectors_;
  std::map<std::string, std::size_t, std::less<>> dims_;
};

// ---------------------------------------------------------------- operations

struct FetchOptions {
  std::string model = "gpt-4o-mini";
  PromptVariant variant = PromptVariant::kExpertPrompt;
  double temperature = kDefaultTemperature;
};

// Cache hit: no request. Miss: one completion, persisted before returning.
// `entity_name` is what the prompt names; the label is the cache key.
DescriptionRecord fetch_description(ChatEndpoint& endpoint, std::string_view entity_label,
                                    std::string_view entity_name, const FetchOptions& options,
                                    DescriptionCache& cache);

struct EmbedOptions {
  std::string model = "text-embedding-3-small";
  // Inputs are truncated to this many bytes (on a UTF-8 boundary) before
  // hashing and sending.
  std::size_t max_input_bytes = 24000;
};

TextVector embed_text(EmbeddingEndpoint& endpoint, std::string_view text, const EmbedOptions& options,
                      EmbeddingCache& cache);

std::string truncate_utf8(std::string_view text, std::size_t max_bytes);

TextVector concat_enrichment(std::span<const float> name_vector, std::span<const float> description_vector);
TextVector slice_anchor(std::span<const float> concat, std::size_t k);

// Replaces floor(ratio * n_tokens) whitespace tokens per record with "[MASK]".
// Whitespace between tokens is preserved. One generator seeded by `seed`
// walks the records in order.
std::vector<DescriptionRecord> mask_descriptions(std::span<const DescriptionRecord> records,
                                                 double ratio, std::uint64_t seed);
std::size_t count_tokens(std::string_view text);
std::size_t count_masks(std::string_view text);

// ---------------------------------------------------------------- table

enum class AnchorProjection {
  kPrefix,            // anchor = concat[0..k)
  kRandomProjection,  // anchor = P * concat, P Gaussian / sqrt(k), seeded
};

class EnrichmentTable {
 public:
  EnrichmentTable() = default;
  // `concat` holds [name ; description] per row, so cols must be even.
  EnrichmentTable(std::vector<std::string> labels, Matrix<float> concat, std::size_t anchor_dim,
                  AnchorProjection projection = AnchorProjection::kPrefix,
                  std::uint64_t projection_seed = 0);

  static EnrichmentTable from_parts(std::vector<std::string> labels, const Matrix<float>& names,
                                    const Matrix<float>& descriptions, std::size_t anchor_dim);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t text_dim() const noexcept { return concat_.cols() / 2; }
  std::size_t anchor_dim() const noexcept { return anchors_.cols(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Matrix<float>& concat() const noexcept { return concat_; }
  const Matrix<float>& anchors() const noexcept { return anchors_; }

  std::span<const float> name_vector(std::size_t i) const { return concat_.row(i).first(text_dim()); }
  std::span<const float> description_vector(std::size_t i) const {
    return concat_.row(i).subspan(text_dim());
  }
  std::span<const float> concat_vector(std::size_t i) const { return concat_.row(i); }
  std::span<const float> anchor_vector(std::size_t i) const { return anchors_.row(i); }

  EnrichmentTable with_anchor_dim(std::size_t k) const;

 private:
  std::vector<std::string> labels_;
  Matrix<float> concat_;
  Matrix<float> anchors_;
  AnchorProjection projection_ = AnchorProjection::kPrefix;
  std::uint64_t projection_seed_ = 0;
};

// Writes the concatenated vectors as a KGEV file plus label sidecar.
void export_enrichment(const EnrichmentTable& table, const std::filesystem::path& path);
// Rows must match `entities` one-to-one in index order.
EnrichmentTable import_enrichment(const std::filesystem::path& path, const Vocabulary& entities,
                                  std::size_t anchor_dim,
                                  AnchorProjection projection = AnchorProjection::kPrefix,
                                  std::uint64_t projection_seed = 0);

// ---------------------------------------------------------------- full pass

struct EnrichOptions {
  FetchOptions fetch;
  EmbedOptions embed;
  std::size_t max_concurrency = 1;
  // Optional label -> human-readable name; defaults to the label.
  std::map<std::string, std::string, std::less<>> names;
};

struct EnrichResult {
  Matrix<float> names;         // |E| x dim(f)
  Matrix<float> descriptions;  // |E| x dim(f)
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, std::string>> failures;  // (label, error)
  bool complete() const { return failures.empty(); }
};

EnrichResult run_enrichment(const Vocabulary& entities, const EnrichOptions& options,
                            ChatEndpoint& chat, EmbeddingEndpoint& embed,
                            DescriptionCache& descriptions, EmbeddingCache& embeddings);

std::map<std::string, std::string, std::less<>> read_names(const std::filesystem::path& path);

}  // namespace anchored_kge
