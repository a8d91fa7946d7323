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

// Mini-batch optimization of  total = zeta1 * anchor_loss + zeta2 * link_loss.
//
//   link_loss   = mean over positives of
//                   softplus(f(pos) - gamma) + mean_neg softplus(gamma - f(neg))
//               = -log sig(gamma - f(pos)) - mean_neg log sig(f(neg) - gamma)
//   anchor_loss = mean over the batch's distinct entities of d(e_i, v_i)
//
// Both terms are minimized: positives are pushed below the margin, negatives
// above it, and entity rows are pulled toward their text anchors.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "anchored_kge/enrich.hpp"
#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/kge_core.hpp"

namespace anchored_kge {

enum class AnchorDistance { kSquaredL2, kCosine, kKL };
enum class CorruptionSide { kTail, kHead, kBoth };
enum class OptimizerKind { kAdagrad, kSGD };
enum class InitKind { kText, kRandom };

std::string_view to_string(AnchorDistance d);
std::string_view to_string(CorruptionSide s);
std::string_view to_string(OptimizerKind o);
std::string_view to_string(InitKind i);

struct TrainConfig {
  std::string model = "TransE_l2";
  std::size_t dim = 400;
  double zeta1 = 1.0;
  double zeta2 = 1.0;
  double gamma = 12.0;
  double learning_rate = 0.1;
  std::size_t batch_size = 1024;
  std::size_t neg_per_pos = 256;
  std::uint64_t steps = 100000;
  AnchorDistance anchor_distance = AnchorDistance::kSquaredL2;
  CorruptionSide corruption_side = CorruptionSide::kBoth;
  OptimizerKind optimizer = OptimizerKind::kAdagrad;
  InitKind init = InitKind::kText;  // only meaningful when anchors are supplied
  bool filter_negatives = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::uint64_t log_interval = 100;
  std::uint64_t checkpoint_interval = 0;  // 0: final checkpoint only
  double adagrad_epsilon = 1e-10;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

// Flat TOML subset: `key = value` lines, '#' comments, optional quotes on
// strings. Keys are the TrainConfig field names; unknown keys are errors.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
// Canonical rendering (every field, fixed order); parse_config round-trips it.
std::string to_config_text(const TrainConfig& config);
std::string config_hash(const TrainConfig& config);

// ---------------------------------------------------------------- sampling

struct NegativeBatch {
  std::size_t neg_per_pos = 0;
  std::vector<Triple> triples;              // positives.size() * neg_per_pos
  std::vector<CorruptionSide> corrupted;    // kHead or kTail, one per positive

  std::span<const Triple> for_positive(std::size_t i) const {
    return std::span<const Triple>(triples).subspan(i * neg_per_pos, neg_per_pos);
  }
};

// Corrupted entities are uniform over [0, num_entities). With kBoth, even
// positions in the batch corrupt the tail and odd positions the head. When
// `known` is given, corruptions that are known triples are redrawn (bounded).
NegativeBatch sample_negatives(std::span<const Triple> positives, std::size_t num_entities,
                               std::size_t neg_per_pos, CorruptionSide side, std::mt19937_64& rng,
                               const TripleSet* known = nullptr);

// ---------------------------------------------------------------- losses

struct LossBreakdown {
  double link_loss = 0;
  double anchor_loss = 0;
  double total = 0;
};

template <typename Real>
double link_loss(const ModelParams<Real>& params, const Triple& positive,
                 std::span<const Triple> negatives);

// Distinct heads and tails of `positives`, first-appearance order.
std::vector<EntityIndex> batch_entities(std::span<const Triple> positives);

template <typename Real>
double anchor_loss(const ModelParams<Real>& params, std::span<const EntityIndex> entities,
                   const EnrichmentTable& anchors, AnchorDistance distance);

// Row-sparse gradient keyed by table row.
class SparseGradient {
 public:
  void reset(std::size_t entity_width, std::size_t relation_width);
  std::span<double> entity(EntityIndex row);
  std::span<double> relation(RelationIndex row);

  const std::vector<EntityIndex>& entity_rows() const noexcept { return entity_rows_; }
  const std::vector<RelationIndex>& relation_rows() const noexcept { return relation_rows_; }
  std::span<const double> entity_grad(std::size_t slot) const;
  std::span<const double> relation_grad(std::size_t slot) const;

 private:
  std::size_t ew_ = 0, rw_ = 0;
  std::vector<EntityIndex> entity_rows_;
  std::vector<RelationIndex> relation_rows_;
  std::unordered_map<EntityIndex, std::size_t> entity_slot_;
  std::unordered_map<RelationIndex, std::size_t> relation_slot_;
  // Rows live in fixed-size blocks so spans handed out stay valid while
  // further rows are added.
  class RowPool {
   public:
    void reset(std::size_t width);
    std::span<double> add();  // zeroed
    std::span<double> at(std::size_t slot);
    std::span<const double> at(std::size_t slot) const;

   private:
    static constexpr std::size_t kRowsPerBlock = 256;
    std::size_t width_ = 0;
    std::size_t used_ = 0;
    std::vector<std::unique_ptr<double[]>> blocks_;
  };
  RowPool entity_values_;
  RowPool relation_values_;
};

// Loss of one batch and (optionally) its gradient. `anchors` may be null
// only when zeta1 == 0.
template <typename Real>
LossBreakdown compute_loss(const ModelParams<Real>& params, std::span<const Triple> positives,
                           const NegativeBatch& negatives, const EnrichmentTable* anchors,
                           const TrainConfig& config, SparseGradient* gradient);

// ---------------------------------------------------------------- updates

struct OptimizerState {
  std::vector<double> entity_sum;    // Adagrad per-row accumulators
  std::vector<double> relation_sum;

  static OptimizerState for_params(std::size_t num_entities, std::size_t num_relations) {
    return {std::vector<double>(num_entities, 0.0), std::vector<double>(num_relations, 0.0)};
  }
};

// One update on exactly the rows the batch touches. Throws DivergenceError
// (carrying batch_index) before touching params if anything is non-finite.
template <typename Real>
LossBreakdown train_step(ModelParams<Real>& params, std::span<const Triple> positives,
                         const NegativeBatch& negatives, const EnrichmentTable* anchors,
                         const TrainConfig& config, OptimizerState& state,
                         std::size_t batch_index = 0);

// ---------------------------------------------------------------- loop

struct LogRow {
  std::uint64_t step = 0;
  double link_loss = 0;
  double anchor_loss = 0;
  double total_loss = 0;
  std::int64_t wallclock_ms = 0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const LogRow&)> on_log;
  // Extra triples to exclude when filter_negatives is on (defaults to the training set).
  const TripleSet* known = nullptr;
};

struct TrainResult {
  Params params;
  std::vector<LogRow> log;
  std::uint64_t steps_done = 0;
};

// `anchors` == nullptr trains the structure-only baseline (random init,
// anchor term off regardless of zeta1).
TrainResult train(const TripleSet& dataset, const EnrichmentTable* anchors, const TrainConfig& config,
                  const TrainOptions& options = {});

void write_training_log(const std::filesystem::path& path, std::span<const LogRow> rows);

}  // namespace anchored_kge
