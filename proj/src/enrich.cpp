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

#include "anchored_kge/enrich.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"
#include "anchored_kge/vector_io.hpp"

namespace anchored_kge {

namespace {

constexpr std::string_view kExpertTemplate =
    "You are an expert providing detailed and accurate information and background about "
    "biological entities, Tell me about the background and uses of the ({})";

constexpr std::string_view kStructuredTemplate =
    "Act as a biomedical knowledge graph specialist. Generate structured, for input biological "
    "entities using this template:\n"
    "**Output Structure:**\n"
    "1. Background: Classification & core biological significance\n"
    "2. Appearance: Key structural/morphological features (if applicable)\n"
    "3. Clinical Relevance: Diagnostic/therapeutic applications (if exists)\n"
    "**Requirements:**\n"
    "→ Maintain scientific accuracy\n"
    "→ Use bullet-resistant phrasing (no markdown)\n"
    "→ Separate sections with semicolons (;)\n"
    "→ Exclude disclaimers/examples\n"
    "**Response Example Format:**\n"
    "Background: [2-3 sentences];\n"
    "Appearance: [1-2 attributes];\n"
    "Clinical: [1-2 applications]\n"
    "Input: \"{}\"";

constexpr std::string_view kMaskToken = "[MASK]";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct TokenSpan {
  std::size_t begin, end;
};

std::vector<TokenSpan> tokenize(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.push_back({b, i});
  }
  return out;
}

std::string temperature_key(double t) { return fmt::format("{:.6f}", t); }

void check_temperature(double t) {
  if (!(t >= 0.0 && t <= 2.0)) throw PreconditionError(fmt::format("temperature {} not in [0, 2]", t));
}

}  // namespace

std::string_view to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::kNoPrompt: return "noprompt";
    case PromptVariant::kExpertPrompt: return "expert";
    case PromptVariant::kStructuredPrompt: return "structured";
  }
  return "expert";
}

PromptVariant parse_prompt_variant(std::string_view s) {
  if (s == "noprompt") return PromptVariant::kNoPrompt;
  if (s == "expert") return PromptVariant::kExpertPrompt;
  if (s == "structured") return PromptVariant::kStructuredPrompt;
  throw ConfigError(fmt::format("unknown prompt variant '{}' (noprompt|expert|structured)", s));
}

std::string render_prompt(std::string_view entity_name, PromptVariant variant) {
  if (entity_name.empty()) throw PreconditionError("render_prompt: empty entity name");
  switch (variant) {
    case PromptVariant::kNoPrompt: return std::string(entity_name);
    case PromptVariant::kExpertPrompt: return fmt::format(kExpertTemplate, entity_name);
    case PromptVariant::kStructuredPrompt: return fmt::format(kStructuredTemplate, entity_name);
  }
  return std::string(entity_name);
}

// ---------------------------------------------------------------- endpoints

nlohmann::json chat_request_body(const std::string& model, const std::string& prompt,
                                 double temperature) {
  return {{"model", model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
          {"temperature", temperature}};
}

nlohmann::json embedding_request_body(const std::string& model, const std::string& text) {
  return {{"model", model}, {"input", text}};
}

std::string HttpChatEndpoint::complete(const std::string& model, const std::string& prompt,
                                       double temperature) {
  const auto resp = client_.post("/chat/completions", chat_request_body(model, prompt, temperature));
  try {
    const auto& content = resp.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(200, std::string("chat response missing choices[0].message.content: ") + e.what());
  }
}

TextVector HttpEmbeddingEndpoint::embed(const std::string& model, const std::string& text) {
  const auto resp = client_.post("/embeddings", embedding_request_body(model, text));
  try {
    return resp.at("data").at(0).at("embedding").get<TextVector>();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(200, std::string("embedding response missing data[0].embedding: ") + e.what());
  }
}

// ---------------------------------------------------------------- caches

nlohmann::json to_json(const DescriptionRecord& r) {
  return {{"entity_label", r.entity_label}, {"variant", to_string(r.variant)},
          {"temperature", r.temperature},   {"model", r.model},
          {"text", r.text},                 {"fetched_at", r.fetched_at}};
}

DescriptionRecord description_from_json(const nlohmann::json& j) {
  DescriptionRecord r;
  r.entity_label = j.at("entity_label").get<std::string>();
  r.variant = parse_prompt_variant(j.at("variant").get<std::string>());
  r.temperature = j.at("temperature").get<double>();
  r.model = j.at("model").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.fetched_at = j.value("fetched_at", "");
  return r;
}

DescriptionCache::DescriptionCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    DescriptionRecord r;
    try {
      r = description_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError(path_.string(), lineno, e.what());
    }
    const auto k = key(r.entity_label, r.variant, r.temperature, r.model);
    if (auto it = index_.find(k); it != index_.end()) {
      records_[it->second] = std::move(r);  // later lines win
    } else {
      index_.emplace(k, records_.size());
      records_.push_back(std::move(r));
    }
  }
}

std::string DescriptionCache::key(std::string_view label, PromptVariant v, double temperature,
                                  std::string_view model) {
  return fmt::format("{}\x1f{}\x1f{}\x1f{}", label, to_string(v), temperature_key(temperature), model);
}

std::optional<DescriptionRecord> DescriptionCache::find(std::string_view entity_label,
                                                        PromptVariant variant, double temperature,
                                                        std::string_view model) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(key(entity_label, variant, temperature, model));
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

void DescriptionCache::put(const DescriptionRecord& record) {
  if (record.text.empty()) throw EmptyDescriptionError("refusing to cache an empty description");
  std::lock_guard lock(mu_);
  const auto k = key(record.entity_label, record.variant, record.temperature, record.model);
  if (auto it = index_.find(k); it != index_.end()) {
    records_[it->second] = record;
  } else {
    index_.emplace(k, records_.size());
    records_.push_back(record);
  }
  persist_locked();
}

void DescriptionCache::persist_locked() const {
  if (path_.empty()) return;
  write_atomically(path_, [&](std::ostream& out) {
    for (const auto& r : records_) out << to_json(r).dump() << '\n';
  });
}

std::vector<DescriptionRecord> DescriptionCache::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t DescriptionCache::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto model = j.at("model").get<std::string>();
      const auto hash = j.at("text_sha256").get<std::string>();
      auto vec = j.at("vector").get<TextVector>();
      dims_[model] = vec.size();
      vectors_[model + '\x1f' + hash] = std::move(vec);
      lines_.push_back(line);
    } catch (const std::exception& e) {
      throw ParseError(path_.string(), lineno, e.what());
    }
  }
}

std::optional<TextVector> EmbeddingCache::find(std::string_view model, std::string_view text) const {
  const auto k = fmt::format("{}\x1f{}", model, sha256_hex(text));
  std::lock_guard lock(mu_);
  auto it = vectors_.find(k);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(std::string_view model, std::string_view text, const TextVector& vec) {
  const auto hash = sha256_hex(text);
  std::lock_guard lock(mu_);
  if (auto it = dims_.find(model); it != dims_.end() && it->second != vec.size()) {
    throw ConsistencyError(fmt::format("model '{}' returned dim {} but earlier vectors have dim {}",
                                       model, vec.size(), it->second));
  }
  dims_[std::string(model)] = vec.size();
  const auto k = fmt::format("{}\x1f{}", model, hash);
  if (vectors_.contains(k)) return;
  vectors_.emplace(k, vec);
  lines_.push_back(nlohmann::json{{"model", model}, {"text_sha256", hash}, {"vector", vec}}.dump());
  persist_locked();
}

std::optional<std::size_t> EmbeddingCache::dim(std::string_view model) const {
  std::lock_guard lock(mu_);
  auto it = dims_.find(model);
  if (it == dims_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return vectors_.size();
}

void EmbeddingCache::persist_locked() const {
  if (path_.empty()) return;
  write_atomically(path_, [&](std::ostream& out) {
    for (const auto& l : lines_) out << l << '\n';
  });
}

// ---------------------------------------------------------------- operations

DescriptionRecord fetch_description(ChatEndpoint& endpoint, std::string_view entity_label,
                                    std::string_view entity_name, const FetchOptions& options,
                                    DescriptionCache& cache) {
  check_temperature(options.temperature);
  if (auto hit = cache.find(entity_label, options.variant, options.temperature, options.model)) {
    return *hit;
  }
  const auto prompt = render_prompt(entity_name, options.variant);
  std::string text = endpoint.complete(options.model, prompt, options.temperature);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyDescriptionError(fmt::format("empty completion for '{}'", entity_label));
  }
  DescriptionRecord record{std::string(entity_label), options.variant, options.temperature,
                           options.model, std::move(text), rfc3339_now()};
  cache.put(record);
  return record;
}

std::string truncate_utf8(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  std::size_t cut = max_bytes;
  // Step back over continuation bytes (10xxxxxx).
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return std::string(text.substr(0, cut));
}

TextVector embed_text(EmbeddingEndpoint& endpoint, std::string_view text, const EmbedOptions& options,
                      EmbeddingCache& cache) {
  if (text.empty()) throw PreconditionError("embed_text: empty text");
  std::string input = truncate_utf8(text, options.max_input_bytes);
  if (input.size() < text.size()) {
    spdlog::debug("embedding input truncated from {} to {} bytes", text.size(), input.size());
  }
  if (auto hit = cache.find(options.model, input)) return *hit;
  TextVector vec = endpoint.embed(options.model, input);
  if (vec.empty()) throw ConsistencyError("embedding endpoint returned an empty vector");
  if (!std::all_of(vec.begin(), vec.end(), [](float v) { return std::isfinite(v); })) {
    throw ConsistencyError("embedding endpoint returned non-finite components");
  }
  cache.put(options.model, input, vec);
  return vec;
}

TextVector concat_enrichment(std::span<const float> name_vector,
                             std::span<const float> description_vector) {
  if (name_vector.size() != description_vector.size()) {
    throw ShapeError(fmt::format("name vector dim {} != description vector dim {}",
                                 name_vector.size(), description_vector.size()));
  }
  TextVector out;
  out.reserve(name_vector.size() * 2);
  out.insert(out.end(), name_vector.begin(), name_vector.end());
  out.insert(out.end(), description_vector.begin(), description_vector.end());
  return out;
}

TextVector slice_anchor(std::span<const float> concat, std::size_t k) {
  if (k == 0) throw PreconditionError("slice_anchor: k must be positive");
  if (k > concat.size()) {
    throw ShapeError(fmt::format("cannot slice {} components from a dim-{} vector", k, concat.size()));
  }
  return TextVector(concat.begin(), concat.begin() + static_cast<std::ptrdiff_t>(k));
}

std::vector<DescriptionRecord> mask_descriptions(std::span<const DescriptionRecord> records,
                                                 double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw PreconditionError("mask ratio must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<DescriptionRecord> out(records.begin(), records.end());
  for (auto& rec : out) {
    const auto tokens = tokenize(rec.text);
    const auto n_mask = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(tokens.size())));
    if (n_mask == 0) continue;
    // Partial Fisher-Yates over token positions.
    std::vector<std::size_t> order(tokens.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < n_mask; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<bool> masked(tokens.size(), false);
    for (std::size_t i = 0; i < n_mask; ++i) masked[order[i]] = true;
    std::string text;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      text.append(rec.text, cursor, tokens[i].begin - cursor);
      if (masked[i]) {
        text += kMaskToken;
      } else {
        text.append(rec.text, tokens[i].begin, tokens[i].end - tokens[i].begin);
      }
      cursor = tokens[i].end;
    }
    text.append(rec.text, cursor, std::string::npos);
    rec.text = std::move(text);
  }
  return out;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

std::size_t count_masks(std::string_view text) {
  std::size_t n = 0;
  for (const auto& t : tokenize(text)) {
    if (text.substr(t.begin, t.end - t.begin) == kMaskToken) ++n;
  }
  return n;
}

// ---------------------------------------------------------------- table

EnrichmentTable::EnrichmentTable(std::vector<std::string> labels, Matrix<float> concat,
                                 std::size_t anchor_dim, AnchorProjection projection,
                                 std::uint64_t projection_seed)
    : labels_(std::move(labels)),
      concat_(std::move(concat)),
      projection_(projection),
      projection_seed_(projection_seed) {
  if (labels_.size() != concat_.rows()) {
    throw ShapeError(fmt::format("{} labels for {} enrichment rows", labels_.size(), concat_.rows()));
  }
  if (concat_.cols() % 2 != 0) throw ShapeError("concatenated enrichment width must be even");
  if (anchor_dim == 0) throw PreconditionError("anchor dimension must be positive");
  anchors_ = Matrix<float>(concat_.rows(), anchor_dim);
  if (projection_ == AnchorProjection::kPrefix) {
    if (anchor_dim > concat_.cols()) {
      throw ShapeError(fmt::format("anchor dim {} exceeds concatenated dim {}", anchor_dim, concat_.cols()));
    }
    for (std::size_t i = 0; i < concat_.rows(); ++i) {
      const auto src = concat_.row(i).first(anchor_dim);
      std::copy(src.begin(), src.end(), anchors_.row(i).begin());
    }
  } else {
    std::mt19937_64 rng(projection_seed_);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(anchor_dim)));
    Matrix<double> proj(anchor_dim, concat_.cols());
    for (auto& v : proj.data()) v = normal(rng);
    for (std::size_t i = 0; i < concat_.rows(); ++i) {
      const auto x = concat_.row(i);
      for (std::size_t a = 0; a < anchor_dim; ++a) {
        double acc = 0.0;
        const auto p = proj.row(a);
        for (std::size_t c = 0; c < x.size(); ++c) acc += p[c] * x[c];
        anchors_(i, a) = static_cast<float>(acc);
      }
    }
  }
}

EnrichmentTable EnrichmentTable::from_parts(std::vector<std::string> labels, const Matrix<float>& names,
                                            const Matrix<float>& descriptions, std::size_t anchor_dim) {
  if (names.rows() != descriptions.rows()) throw ShapeError("name/description row count mismatch");
  Matrix<float> concat(names.rows(), names.cols() + descriptions.cols());
  for (std::size_t i = 0; i < names.rows(); ++i) {
    const auto v = concat_enrichment(names.row(i), descriptions.row(i));
    std::copy(v.begin(), v.end(), concat.row(i).begin());
  }
  return EnrichmentTable(std::move(labels), std::move(concat), anchor_dim);
}

EnrichmentTable EnrichmentTable::with_anchor_dim(std::size_t k) const {
  return EnrichmentTable(labels_, concat_, k, projection_, projection_seed_);
}

void export_enrichment(const EnrichmentTable& table, const std::filesystem::path& path) {
  write_vector_file(path, table.concat(), table.labels());
}

EnrichmentTable import_enrichment(const std::filesystem::path& path, const Vocabulary& entities,
                                  std::size_t anchor_dim, AnchorProjection projection,
                                  std::uint64_t projection_seed) {
  auto lm = read_vector_file(path);
  if (lm.values.rows() != entities.size()) {
    throw FormatError(fmt::format("{}: {} rows but the vocabulary has {} entities", path.string(),
                                  lm.values.rows(), entities.size()));
  }
  for (std::size_t i = 0; i < lm.labels.size(); ++i) {
    if (lm.labels[i] != entities.label(i)) {
      throw FormatError(fmt::format("{}: row {} is '{}' but entity {} is '{}'", path.string(), i,
                                    lm.labels[i], i, entities.label(i)));
    }
  }
  if (lm.values.cols() % 2 != 0) throw FormatError(path.string() + ": odd enrichment width");
  return EnrichmentTable(std::move(lm.labels), std::move(lm.values), anchor_dim, projection,
                         projection_seed);
}

// ---------------------------------------------------------------- full pass

EnrichResult run_enrichment(const Vocabulary& entities, const EnrichOptions& options,
                            ChatEndpoint& chat, EmbeddingEndpoint& embed,
                            DescriptionCache& descriptions, EmbeddingCache& embeddings) {
  const std::size_t n = entities.size();
  std::vector<TextVector> name_vecs(n), desc_vecs(n);
  std::vector<std::string> errors(n);

  auto work = [&](std::size_t i) {
    const auto& label = entities.label(i);
    auto it = options.names.find(label);
    const std::string& name = it == options.names.end() ? label : it->second;
    try {
      const auto record = fetch_description(chat, label, name, options.fetch, descriptions);
      name_vecs[i] = embed_text(embed, name, options.embed, embeddings);
      desc_vecs[i] = embed_text(embed, record.text, options.embed, embeddings);
      if (name_vecs[i].size() != desc_vecs[i].size()) throw ShapeError("name/description dims differ");
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.max_concurrency, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) work(i);
      });
    }
  }

  EnrichResult result;
  result.labels = entities.labels();
  std::size_t dim = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      result.failures.emplace_back(entities.label(i), errors[i]);
    } else if (dim == 0) {
      dim = name_vecs[i].size();
    }
  }
  result.names = Matrix<float>(n, dim);
  result.descriptions = Matrix<float>(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) continue;
    if (name_vecs[i].size() != dim) {
      result.failures.emplace_back(entities.label(i), "embedding dimension differs from other entities");
      continue;
    }
    std::copy(name_vecs[i].begin(), name_vecs[i].end(), result.names.row(i).begin());
    std::copy(desc_vecs[i].begin(), desc_vecs[i].end(), result.descriptions.row(i).begin());
  }
  return result;
}

std::map<std::string, std::string, std::less<>> read_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open names file " + path.string());
  std::map<std::string, std::string, std::less<>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), lineno, "expected label<TAB>name");
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace anchored_kge
