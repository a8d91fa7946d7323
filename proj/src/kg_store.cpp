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

#include "anchored_kge/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"

namespace anchored_kge {

Vocabulary::Vocabulary(std::vector<std::string> labels) {
  labels_.reserve(labels.size());
  for (auto& l : labels) {
    if (index_.contains(l)) throw VocabularyError("duplicate vocabulary label: " + l);
    intern(l);
  }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::at(std::string_view label) const {
  auto idx = find(label);
  if (!idx) throw VocabularyError(fmt::format("unknown label '{}'", label));
  return *idx;
}

std::uint32_t Vocabulary::intern(std::string_view label) {
  if (auto idx = find(label)) return *idx;
  const auto idx = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  index_.emplace(labels_.back(), idx);
  return idx;
}

std::string Vocabulary::digest() const {
  std::string dump;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    dump += fmt::format("{}\t{}\n", i, labels_[i]);
  }
  return sha256_hex(dump);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
    case Split::kAll: return "all";
  }
  return "all";
}

TripleSet::TripleSet(std::vector<Triple> triples, Split split, Vocabs vocabs)
    : split_(split), vocabs_(std::move(vocabs)) {
  if (!vocabs_.entities) vocabs_.entities = std::make_shared<const Vocabulary>();
  if (!vocabs_.relations) vocabs_.relations = std::make_shared<const Vocabulary>();
  const auto ne = vocabs_.entities->size();
  const auto nr = vocabs_.relations->size();
  triples_.reserve(triples.size());
  members_.reserve(triples.size());
  for (const Triple& t : triples) {
    if (t.head >= ne || t.tail >= ne || t.relation >= nr) {
      throw VocabularyError(fmt::format("triple ({}, {}, {}) out of vocabulary range", t.head,
                                        t.relation, t.tail));
    }
    if (members_.insert(t).second) {
      triples_.push_back(t);
    } else {
      ++duplicates_;
    }
  }
}

TripleSet TripleSet::with_triples(std::vector<Triple> triples) const {
  return TripleSet(std::move(triples), split_, vocabs_);
}

namespace {

struct RawTriple {
  std::string head, relation, tail;
  std::size_t line;
};

std::vector<RawTriple> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file " + path.string());
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (a == std::string::npos || b == std::string::npos ||
        line.find('\t', b + 1) != std::string::npos) {
      throw ParseError(path.string(), lineno, "expected 3 tab-separated fields");
    }
    out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1), lineno});
  }
  return out;
}

std::vector<Triple> index_raw(const std::vector<RawTriple>& raw, const std::string& path,
                              Vocabulary& ents, Vocabulary& rels, VocabMode mode) {
  std::vector<Triple> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    if (mode == VocabMode::kBuild) {
      const auto h = ents.intern(r.head);
      const auto rel = rels.intern(r.relation);
      out.push_back({h, rel, ents.intern(r.tail)});
    } else {
      auto h = ents.find(r.head);
      auto rel = rels.find(r.relation);
      auto t = ents.find(r.tail);
      if (!h || !rel || !t) {
        throw VocabularyError(fmt::format("{}:{}: label not in existing vocabulary: '{}'", path,
                                          r.line, !h ? r.head : (!rel ? r.relation : r.tail)));
      }
      out.push_back({*h, *rel, *t});
    }
  }
  return out;
}

void log_duplicates(const std::filesystem::path& path, const TripleSet& set) {
  if (set.duplicates_dropped() > 0) {
    spdlog::info("{}: dropped {} duplicate triple(s)", path.string(), set.duplicates_dropped());
  }
}

}  // namespace

TripleSet load_triples(const std::filesystem::path& path, Split split, VocabMode mode,
                       const Vocabs* existing) {
  if (mode == VocabMode::kReuse && (existing == nullptr || !existing->entities)) {
    throw PreconditionError("reuse mode requires existing vocabularies");
  }
  const auto raw = read_raw(path);
  Vocabulary ents = existing && existing->entities ? *existing->entities : Vocabulary{};
  Vocabulary rels = existing && existing->relations ? *existing->relations : Vocabulary{};
  auto triples = index_raw(raw, path.string(), ents, rels, mode);
  Vocabs vocabs;
  if (mode == VocabMode::kReuse) {
    vocabs = *existing;
  } else {
    vocabs = {std::make_shared<const Vocabulary>(std::move(ents)),
              std::make_shared<const Vocabulary>(std::move(rels))};
  }
  TripleSet set(std::move(triples), split, std::move(vocabs));
  log_duplicates(path, set);
  return set;
}

SplitSets load_split_files(const std::filesystem::path& train, const std::filesystem::path& valid,
                           const std::filesystem::path& test) {
  const auto raw_train = read_raw(train);
  const auto raw_valid = read_raw(valid);
  const auto raw_test = read_raw(test);
  Vocabulary ents, rels;
  auto t_train = index_raw(raw_train, train.string(), ents, rels, VocabMode::kBuild);
  auto t_valid = index_raw(raw_valid, valid.string(), ents, rels, VocabMode::kBuild);
  auto t_test = index_raw(raw_test, test.string(), ents, rels, VocabMode::kBuild);
  Vocabs vocabs{std::make_shared<const Vocabulary>(std::move(ents)),
                std::make_shared<const Vocabulary>(std::move(rels))};
  SplitSets out{TripleSet(std::move(t_train), Split::kTrain, vocabs),
                TripleSet(std::move(t_valid), Split::kValid, vocabs),
                TripleSet(std::move(t_test), Split::kTest, vocabs)};
  log_duplicates(train, out.train);
  log_duplicates(valid, out.valid);
  log_duplicates(test, out.test);
  return out;
}

SplitSets split_random(const TripleSet& all, double valid_fraction, double test_fraction,
                       std::uint64_t seed) {
  if (valid_fraction < 0 || test_fraction < 0 || valid_fraction + test_fraction > 1) {
    throw PreconditionError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<Triple> shuffled(all.triples().begin(), all.triples().end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto n = shuffled.size();
  const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n));
  const auto n_train = n - n_valid - n_test;
  auto first = shuffled.begin();
  std::vector<Triple> tr(first, first + n_train);
  std::vector<Triple> va(first + n_train, first + n_train + n_valid);
  std::vector<Triple> te(first + n_train + n_valid, shuffled.end());
  return {TripleSet(std::move(tr), Split::kTrain, all.vocabs()),
          TripleSet(std::move(va), Split::kValid, all.vocabs()),
          TripleSet(std::move(te), Split::kTest, all.vocabs())};
}

void write_triples(const std::filesystem::path& path, const TripleSet& set) {
  write_atomically(path, [&](std::ostream& out) {
    for (const Triple& t : set.triples()) {
      out << set.entities().label(t.head) << '\t' << set.relations().label(t.relation) << '\t'
          << set.entities().label(t.tail) << '\n';
    }
  });
}

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_atomically(path, [&](std::ostream& out) {
    for (std::size_t i = 0; i < vocab.size(); ++i) out << i << '\t' << vocab.label(i) << '\n';
  });
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::vector<std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), lineno, "expected index<TAB>label");
    std::size_t idx = 0;
    try {
      idx = std::stoul(line.substr(0, tab));
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "bad index");
    }
    if (idx != labels.size()) throw ParseError(path.string(), lineno, "indices must be dense and ascending");
    labels.push_back(line.substr(tab + 1));
  }
  return Vocabulary(std::move(labels));
}

std::string entity_type(std::string_view label) {
  const auto pos = label.find("::");
  if (pos == std::string_view::npos || pos == 0) {
    throw TypedLabelError(fmt::format("entity label '{}' has no 'Type::' prefix", label));
  }
  return std::string(label.substr(0, pos));
}

bool EntityTypeIndex::has_type(std::string_view type) const { return pools_.find(type) != pools_.end(); }

const std::vector<EntityIndex>& EntityTypeIndex::pool(std::string_view type) const {
  auto it = pools_.find(type);
  if (it == pools_.end()) {
    throw VocabularyError(fmt::format("unknown entity type '{}'; known types: {}", type,
                                      fmt::join(types(), ", ")));
  }
  return it->second;
}

std::vector<std::string> EntityTypeIndex::types() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : pools_) out.push_back(k);
  return out;
}

EntityTypeIndex build_type_index(const Vocabulary& entities) {
  TypePools pools;
  for (std::uint32_t i = 0; i < entities.size(); ++i) {
    pools[entity_type(entities.label(i))].push_back(i);
  }
  for (auto& [type, members] : pools) {
    std::sort(members.begin(), members.end(), [&](EntityIndex a, EntityIndex b) {
      return entities.label(a) < entities.label(b);
    });
  }
  return EntityTypeIndex(std::move(pools));
}

TripleSet filter_by_relations(const TripleSet& set, std::span<const std::string> relation_labels) {
  std::vector<bool> keep(set.relations().size(), false);
  for (const auto& label : relation_labels) keep[set.relations().at(label)] = true;
  std::vector<Triple> out;
  for (const Triple& t : set.triples()) {
    if (keep[t.relation]) out.push_back(t);
  }
  return set.with_triples(std::move(out));
}

}  // namespace anchored_kge
