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

// Triple storage for typed biomedical knowledge graphs (DRKG-style
// "Type::Source:ID" labels). Vocabularies are dense and assigned in
// first-appearance order; a TripleSet is immutable once built and can be
// shared read-only across threads.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace anchored_kge {

using EntityIndex = std::uint32_t;
using RelationIndex = std::uint32_t;

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::string& label(std::uint32_t index) const { return labels_.at(index); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::uint32_t> find(std::string_view label) const;
  // Throws VocabularyError for unknown labels.
  std::uint32_t at(std::string_view label) const;
  // Returns the existing index or appends a new one.
  std::uint32_t intern(std::string_view label);

  // sha256 over the "index\tlabel" dump.
  std::string digest() const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
};

struct Vocabs {
  std::shared_ptr<const Vocabulary> entities;
  std::shared_ptr<const Vocabulary> relations;
};

struct Triple {
  EntityIndex head = 0;
  RelationIndex relation = 0;
  EntityIndex tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t k = (static_cast<std::uint64_t>(t.head) * 0x9e3779b97f4a7c15ULL) ^
                      (static_cast<std::uint64_t>(t.relation) << 32 | t.tail);
    k ^= k >> 29;
    k *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(k ^ (k >> 32));
  }
};

enum class Split { kTrain, kValid, kTest, kAll };
std::string_view to_string(Split s);

class TripleSet {
 public:
  TripleSet() : TripleSet({}, Split::kAll, Vocabs{}) {}
  // Duplicates are dropped (first occurrence kept). Indices are validated
  // against the vocabularies.
  TripleSet(std::vector<Triple> triples, Split split, Vocabs vocabs);

  std::span<const Triple> triples() const noexcept { return triples_; }
  std::size_t size() const noexcept { return triples_.size(); }
  bool empty() const noexcept { return triples_.empty(); }
  const Triple& operator[](std::size_t i) const { return triples_[i]; }
  Split split() const noexcept { return split_; }

  bool contains(const Triple& t) const { return members_.contains(t); }

  const Vocabulary& entities() const { return *vocabs_.entities; }
  const Vocabulary& relations() const { return *vocabs_.relations; }
  const Vocabs& vocabs() const noexcept { return vocabs_; }
  std::size_t duplicates_dropped() const noexcept { return duplicates_; }

  // Same vocabularies and split label, different triples.
  TripleSet with_triples(std::vector<Triple> triples) const;

 private:
  std::vector<Triple> triples_;
  Split split_;
  Vocabs vocabs_;
  std::unordered_set<Triple, TripleHash> members_;
  std::size_t duplicates_ = 0;
};

enum class VocabMode {
  kBuild,  // extend (a copy of) the given vocabularies with unseen labels
  kReuse,  // unknown labels are a VocabularyError
};

TripleSet load_triples(const std::filesystem::path& path, Split split, VocabMode mode,
                       const Vocabs* existing = nullptr);

struct SplitSets {
  TripleSet train;
  TripleSet valid;
  TripleSet test;
};

// One vocabulary built over train, then valid, then test.
SplitSets load_split_files(const std::filesystem::path& train, const std::filesystem::path& valid,
                           const std::filesystem::path& test);

// Seeded shuffle of `all` into train/valid/test by fraction.
SplitSets split_random(const TripleSet& all, double valid_fraction, double test_fraction,
                       std::uint64_t seed);

void write_triples(const std::filesystem::path& path, const TripleSet& set);
void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocab(const std::filesystem::path& path);

// Substring before the first "::". Throws TypedLabelError if absent or empty.
std::string entity_type(std::string_view label);

using TypePools = std::map<std::string, std::vector<EntityIndex>, std::less<>>;

class EntityTypeIndex {
 public:
  EntityTypeIndex() = default;
  explicit EntityTypeIndex(TypePools pools) : pools_(std::move(pools)) {}

  const TypePools& pools() const noexcept { return pools_; }
  bool has_type(std::string_view type) const;
  // Throws VocabularyError listing the known types.
  const std::vector<EntityIndex>& pool(std::string_view type) const;
  std::vector<std::string> types() const;

 private:
  TypePools pools_;
};

EntityTypeIndex build_type_index(const Vocabulary& entities);

TripleSet filter_by_relations(const TripleSet& set, std::span<const std::string> relation_labels);

}  // namespace anchored_kge
