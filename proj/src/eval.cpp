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

#include "anchored_kge/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"

namespace anchored_kge {

void EvalProtocol::validate() const {
  if (candidate_pool.empty()) throw ProtocolError("candidate pool is empty");
  if (relations.empty()) throw ProtocolError("no evaluation relations");
  if (trials == 0) throw ProtocolError("trials must be positive");
  if (mode == EvalMode::kSampled) {
    if (num_negatives == 0) throw ProtocolError("num_negatives must be positive");
    if (include_true_in_pool && num_negatives < 2) {
      throw ProtocolError("include_true_in_pool needs num_negatives >= 2");
    }
    if (negatives_per_triple() > candidate_pool.size() - 1) {
      throw ProtocolError(fmt::format("cannot sample {} negatives from a pool of {}", negatives_per_triple(),
                                      candidate_pool.size()));
    }
  }
}

nlohmann::json EvalProtocol::to_json() const {
  return {{"mode", mode == EvalMode::kSampled ? "sampled" : "filtered-full"},
          {"num_negatives", num_negatives},
          {"include_true_in_pool", include_true_in_pool},
          {"trials", trials},
          {"seed", seed},
          {"relations", relations},
          {"candidate_pool_size", candidate_pool.size()}};
}

std::size_t rank_from_scores(double true_score, std::span<const double> negative_scores) {
  std::size_t less = 0, ties = 0;
  for (double s : negative_scores) {
    if (s < true_score) ++less;
    else if (s == true_score) ++ties;
  }
  return 1 + less + (ties + 1) / 2;
}

template <typename Real>
RankResult rank_tail(const ModelParams<Real>& params, const Triple& triple,
                     std::span<const EntityIndex> negatives) {
  const double true_score = score(params, triple);
  std::vector<double> scores;
  scores.reserve(negatives.size());
  for (EntityIndex e : negatives) {
    if (e == triple.tail) throw PreconditionError("true tail listed among negatives");
    scores.push_back(score(params, Triple{triple.head, triple.relation, e}));
  }
  return {triple, rank_from_scores(true_score, scores), negatives.size() + 1};
}

double auc_from_ranks(std::span<const RankResult> results) {
  if (results.empty()) throw ProtocolError("auc_from_ranks: no results");
  double sum = 0;
  for (const auto& r : results) {
    if (r.num_candidates < 2) throw ProtocolError("AUC undefined with a single candidate");
    sum += static_cast<double>(r.num_candidates - r.rank) / static_cast<double>(r.num_candidates - 1);
  }
  return sum / static_cast<double>(results.size());
}

Metrics metrics_from_ranks(std::span<const RankResult> results) {
  if (results.empty()) throw ProtocolError("no ranked triples");
  Metrics m;
  const double n = static_cast<double>(results.size());
  for (int k : kHitsAt) m.hits[k] = 0;
  for (const auto& r : results) {
    m.mr += static_cast<double>(r.rank);
    m.mrr += 1.0 / static_cast<double>(r.rank);
    for (int k : kHitsAt) {
      if (r.rank <= static_cast<std::size_t>(k)) m.hits[k] += 1;
    }
  }
  m.mr /= n;
  m.mrr /= n;
  for (auto& [k, v] : m.hits) v /= n;
  m.auc = auc_from_ranks(results);
  return m;
}

namespace {

// Floyd's sampling of k distinct positions from [0, n).
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    std::size_t t = pick(rng);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
      t = j;
    }
    out.push_back(t);
  }
  return out;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

}  // namespace

template <typename Real>
std::vector<RankResult> evaluate_trial(const ModelParams<Real>& params, std::span<const Triple> test,
                                       const EvalProtocol& protocol, std::size_t trial) {
  protocol.validate();
  const auto& pool = protocol.candidate_pool;
  std::unordered_map<EntityIndex, std::size_t> position;
  for (std::size_t i = 0; i < pool.size(); ++i) position.emplace(pool[i], i);

  std::vector<RankResult> results(test.size());
  parallel_for(test.size(), protocol.threads, [&](std::size_t i) {
    const Triple& t = test[i];
    std::vector<EntityIndex> negatives;
    if (protocol.mode == EvalMode::kSampled) {
      std::mt19937_64 rng(derive_seed(protocol.seed, {trial, i}));
      const auto it = position.find(t.tail);
      const bool tail_in_pool = it != position.end();
      const std::size_t universe = pool.size() - (tail_in_pool ? 1 : 0);
      for (std::size_t p : sample_positions(universe, protocol.negatives_per_triple(), rng)) {
        if (tail_in_pool && p >= it->second) ++p;  // skip the true tail's slot
        negatives.push_back(pool[p]);
      }
    } else {
      for (EntityIndex e : pool) {
        if (e == t.tail) continue;
        if (protocol.known && protocol.known->contains(Triple{t.head, t.relation, e})) continue;
        negatives.push_back(e);
      }
    }
    results[i] = rank_tail(params, t, negatives);
  });
  return results;
}

template <typename Real>
MetricsReport evaluate(const ModelParams<Real>& params, const TripleSet& test, const EvalProtocol& protocol) {
  protocol.validate();
  std::vector<bool> keep(test.relations().size(), false);
  for (RelationIndex r : protocol.relations) {
    if (r >= keep.size()) throw ProtocolError("evaluation relation outside the vocabulary");
    keep[r] = true;
  }
  std::vector<Triple> filtered;
  for (const Triple& t : test.triples()) {
    if (keep[t.relation]) filtered.push_back(t);
  }
  if (filtered.empty()) throw ProtocolError("no test triples use the evaluation relations");

  MetricsReport report;
  report.triples_evaluated = filtered.size();
  report.protocol = protocol.to_json();
  const std::size_t trials = protocol.mode == EvalMode::kSampled ? protocol.trials : 1;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto ranks = evaluate_trial(params, filtered, protocol, trial);
    report.per_trial.push_back(metrics_from_ranks(ranks));
  }
  const double n = static_cast<double>(report.per_trial.size());
  for (int k : kHitsAt) report.mean.hits[k] = 0;
  for (const auto& m : report.per_trial) {
    report.mean.mr += m.mr / n;
    report.mean.mrr += m.mrr / n;
    report.mean.auc += m.auc / n;
    for (int k : kHitsAt) report.mean.hits[k] += m.hits.at(k) / n;
  }
  return report;
}

// ---------------------------------------------------------------- reports

std::string format_full(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of("eEn") != std::string::npos) return s;  // exponent, inf, nan
  const auto dot = s.find('.');
  if (dot == std::string::npos) return s + ".000";
  const auto decimals = s.size() - dot - 1;
  if (decimals < 3) s.append(3 - decimals, '0');
  return s;
}

namespace {

std::array<double, 6> columns(const Metrics& m) {
  return {m.mr, m.mrr, m.hits.at(1), m.hits.at(3), m.hits.at(10), m.auc};
}

nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json hits = nlohmann::json::object();
  for (const auto& [k, v] : m.hits) hits[std::to_string(k)] = v;
  return {{"mr", m.mr}, {"mrr", m.mrr}, {"hits", hits}, {"auc", m.auc}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.mr = j.at("mr").get<double>();
  m.mrr = j.at("mrr").get<double>();
  m.auc = j.at("auc").get<double>();
  for (const auto& [k, v] : j.at("hits").items()) m.hits[std::stoi(k)] = v.get<double>();
  return m;
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json j = metrics_json(report.mean);
  j["per_trial"] = nlohmann::json::array();
  for (const auto& m : report.per_trial) j["per_trial"].push_back(metrics_json(m));
  // Population standard deviation across trials.
  nlohmann::json stddev = nlohmann::json::object();
  const char* names[] = {"mr", "mrr", "h1", "h3", "h10", "auc"};
  const auto mean = columns(report.mean);
  for (std::size_t c = 0; c < 6; ++c) {
    double ss = 0;
    for (const auto& m : report.per_trial) {
      const double d = columns(m)[c] - mean[c];
      ss += d * d;
    }
    stddev[names[c]] = report.per_trial.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(report.per_trial.size()));
  }
  j["stddev"] = stddev;
  j["triples_evaluated"] = report.triples_evaluated;
  j["protocol"] = report.protocol;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.mean = metrics_from_json(j);
  for (const auto& t : j.at("per_trial")) r.per_trial.push_back(metrics_from_json(t));
  r.triples_evaluated = j.at("triples_evaluated").get<std::size_t>();
  r.protocol = j.value("protocol", nlohmann::json{});
  return r;
}

std::string emit_report(const MetricsReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kCsv: {
      const auto c = columns(report.mean);
      return fmt::format("mr,mrr,h1,h3,h10,auc\n{},{},{},{},{},{}\n", format_full(c[0]), format_full(c[1]),
                         format_full(c[2]), format_full(c[3]), format_full(c[4]), format_full(c[5]));
    }
    case ReportFormat::kJson: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::kTable: {
      const std::pair<std::string, MetricsReport> row{"model", report};
      return emit_table(std::span(&row, 1));
    }
  }
  return {};
}

std::string emit_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  std::size_t width = 5;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  std::string out = fmt::format("{:<{}} | {:>7} | {:>5} | {:>5} | {:>5} | {:>5} | {:>5}\n", "Model", width, "MR",
                                "MRR", "H@1", "H@3", "H@10", "AUC");
  out += std::string(width, '-') + "-|---------|-------|-------|-------|-------|------\n";
  for (const auto& [name, r] : rows) {
    const auto c = columns(r.mean);
    out += fmt::format("{:<{}} | {:>7.3f} | {:>5.3f} | {:>5.3f} | {:>5.3f} | {:>5.3f} | {:>5.3f}\n", name, width,
                       c[0], c[1], c[2], c[3], c[4], c[5]);
  }
  return out;
}

// ---------------------------------------------------------------- screening

template <typename Real>
std::vector<ScoredCandidate> rank_candidates(const ModelParams<Real>& params, EntityIndex query,
                                             bool query_is_head, std::span<const RelationIndex> relations,
                                             std::span<const EntityIndex> candidates, std::size_t top_k) {
  if (relations.empty()) throw PreconditionError("rank_candidates: no relations");
  std::vector<ScoredCandidate> out;
  out.reserve(candidates.size());
  for (EntityIndex c : candidates) {
    ScoredCandidate best{c, relations[0], std::numeric_limits<double>::infinity()};
    for (RelationIndex r : relations) {
      const Triple t = query_is_head ? Triple{query, r, c} : Triple{c, r, query};
      const double s = score(params, t);
      if (s < best.score) {
        best.score = s;
        best.best_relation = r;
      }
    }
    out.push_back(best);
  }
  std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.score != b.score ? a.score < b.score : a.entity < b.entity;
  });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

#define ANCHORED_KGE_INSTANTIATE(Real)                                                                  \
  template RankResult rank_tail<Real>(const ModelParams<Real>&, const Triple&, std::span<const EntityIndex>); \
  template std::vector<RankResult> evaluate_trial<Real>(const ModelParams<Real>&, std::span<const Triple>,   \
                                                        const EvalProtocol&, std::size_t);                   \
  template MetricsReport evaluate<Real>(const ModelParams<Real>&, const TripleSet&, const EvalProtocol&);    \
  template std::vector<ScoredCandidate> rank_candidates<Real>(const ModelParams<Real>&, EntityIndex, bool,   \
                                                              std::span<const RelationIndex>,                \
                                                              std::span<const EntityIndex>, std::size_t);

ANCHORED_KGE_INSTANTIATE(float)
ANCHORED_KGE_INSTANTIATE(double)
#undef ANCHORED_KGE_INSTANTIATE

}  // namespace anchored_kge
