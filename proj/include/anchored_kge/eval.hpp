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

// Tail-replacement ranking: each test triple's true tail is ranked against
// sampled candidate tails from a typed pool, over several seeded trials.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/kge_core.hpp"

namespace anchored_kge {

enum class EvalMode { kSampled, kFilteredFull };

struct EvalProtocol {
  std::vector<EntityIndex> candidate_pool;
  std::size_t num_negatives = 50;
  std::vector<RelationIndex> relations;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  EvalMode mode = EvalMode::kSampled;
  // When true the sampled list of num_negatives includes the true tail, so
  // only num_negatives - 1 corruptions are drawn.
  bool include_true_in_pool = false;
  std::size_t threads = 1;
  // Triples treated as true in filtered-full mode (besides the test triple).
  const TripleSet* known = nullptr;

  std::size_t negatives_per_triple() const {
    return include_true_in_pool ? num_negatives - 1 : num_negatives;
  }
  void validate() const;
  nlohmann::json to_json() const;
};

struct RankResult {
  Triple triple;
  std::size_t rank = 1;
  std::size_t num_candidates = 1;
};

struct Metrics {
  double mr = 0;
  double mrr = 0;
  std::map<int, double> hits;  // N -> fraction, N in {1, 3, 10}
  double auc = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct MetricsReport {
  Metrics mean;
  std::vector<Metrics> per_trial;
  std::size_t triples_evaluated = 0;
  nlohmann::json protocol;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr int kHitsAt[] = {1, 3, 10};

// rank = 1 + #(strictly better negatives) + ceil(#ties / 2)
template <typename Real>
RankResult rank_tail(const ModelParams<Real>& params, const Triple& triple,
                     std::span<const EntityIndex> negatives);

// Rank from precomputed dissimilarities (lower is better).
std::size_t rank_from_scores(double true_score, std::span<const double> negative_scores);

// Mean of (num_candidates - rank) / (num_candidates - 1).
double auc_from_ranks(std::span<const RankResult> results);
Metrics metrics_from_ranks(std::span<const RankResult> results);

template <typename Real>
std::vector<RankResult> evaluate_trial(const ModelParams<Real>& params, std::span<const Triple> test,
                                       const EvalProtocol& protocol, std::size_t trial);

// Filters `test` to the protocol relations, runs every trial and averages.
template <typename Real>
MetricsReport evaluate(const ModelParams<Real>& params, const TripleSet& test, const EvalProtocol& protocol);

// ---------------------------------------------------------------- reports

enum class ReportFormat { kTable, kCsv, kJson };

// Shortest round-trip decimal, padded to at least three decimals.
std::string format_full(double v);

std::string emit_report(const MetricsReport& report, ReportFormat format);
// One row per named report; 3-decimal fixed columns.
std::string emit_table(std::span<const std::pair<std::string, MetricsReport>> rows);
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- screening

struct ScoredCandidate {
  EntityIndex entity = 0;
  RelationIndex best_relation = 0;
  double score = 0;  // min over relations
};

// Scores (query, r, c) when `query_is_head`, else (c, r, query), for every
// candidate c and relation r; keeps each candidate's best relation. Sorted by
// score, then entity index. Returns at most top_k entries.
template <typename Real>
std::vector<ScoredCandidate> rank_candidates(const ModelParams<Real>& params, EntityIndex query,
                                             bool query_is_head, std::span<const RelationIndex> relations,
                                             std::span<const EntityIndex> candidates, std::size_t top_k);

}  // namespace anchored_kge
