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

// Score functions for TransE, DistMult and RotatE under a single convention:
// the score is a dissimilarity, lower means more plausible. DistMult is
// negated to fit. Parameters are stored as float (Params) or double
// (Params64, used by the gradient oracles); reductions always run in double.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/matrix.hpp"

namespace anchored_kge {

class EnrichmentTable;

enum class ModelKind { kTransE, kDistMult, kRotatE };

struct ModelSpec {
  ModelKind kind = ModelKind::kTransE;
  int p_norm = 2;  // TransE only: 1 or 2

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// "TransE_l1", "TransE_l2" (or "TransE"), "DistMult", "RotatE".
ModelSpec parse_model(std::string_view name);
std::string to_string(const ModelSpec& spec);

// RotatE treats an entity row of width 2m as m complex numbers (real parts
// first, then imaginary parts) and stores m phases per relation.
std::size_t relation_width(const ModelSpec& spec, std::size_t entity_dim);

template <typename Real>
struct ModelParams {
  ModelSpec model;
  double gamma = 12.0;
  Matrix<Real> entities;
  Matrix<Real> relations;

  std::size_t dim() const noexcept { return entities.cols(); }

  template <typename Other>
  ModelParams<Other> cast() const {
    return {model, gamma, entities.template cast<Other>(), relations.template cast<Other>()};
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using Params = ModelParams<float>;
using Params64 = ModelParams<double>;

struct InitOptions {
  std::uint64_t seed = 0;
  // When set, entity rows are copied from the anchor vectors; relations stay random.
  const EnrichmentTable* anchors = nullptr;
};

// Random entries are uniform in [-(gamma+2)/dim, (gamma+2)/dim]; RotatE
// phases are uniform in [-pi, pi].
template <typename Real>
ModelParams<Real> init_params(std::size_t num_entities, std::size_t num_relations, std::size_t dim,
                              const ModelSpec& spec, double gamma, const InitOptions& init);

template <typename Real>
double score(const ModelParams<Real>& params, const Triple& t);

inline double score(const Params& params, EntityIndex h, RelationIndex r, EntityIndex t) {
  return score(params, Triple{h, r, t});
}

// Computes the score and adds scale * d(score)/d(row) into the three
// accumulators (each sized to the matching table width). The accumulators
// may alias when head == tail.
template <typename Real>
double accumulate_score_gradient(const ModelParams<Real>& params, const Triple& t, double scale,
                                 std::span<double> grad_head, std::span<double> grad_relation,
                                 std::span<double> grad_tail);

// Same, with the scale chosen from the score: adds weight(f) * df/dtheta.
// One pass over the rows, for losses whose slope depends on f.
template <typename Real>
double accumulate_weighted_gradient(const ModelParams<Real>& params, const Triple& t,
                                    const std::function<double(double)>& weight, std::span<double> grad_head,
                                    std::span<double> grad_relation, std::span<double> grad_tail);

struct ScoreGradients {
  std::vector<double> head;
  std::vector<double> relation;
  std::vector<double> tail;
};

// Gradients w.r.t. the head, relation and tail rows considered as separate
// inputs (a self-loop's head and tail gradients are not merged).
template <typename Real>
ScoreGradients score_gradients(const ModelParams<Real>& params, const Triple& t);

template <typename Real>
std::vector<double> batch_score(const ModelParams<Real>& params, std::span<const Triple> triples);

// Maps any angle into (-pi, pi].
inline double wrap_phase(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::remainder(x, two_pi);  // [-pi, pi]
  if (y <= -std::numbers::pi) y += two_pi;
  return y;
}

// ---------------------------------------------------------------- checkpoints

struct CheckpointMeta {
  ModelSpec model;
  std::size_t dim = 0;
  double gamma = 0;
  std::uint64_t step = 0;
  std::string vocab_hash;
  std::string config_hash;
};

struct Checkpoint {
  Params params;
  CheckpointMeta meta;
  Vocabs vocabs;
};

std::string vocab_hash(const Vocabs& vocabs);

// Writes entities.kgev, relations.kgev (each with a label sidecar) and meta.json.
void save_checkpoint(const std::filesystem::path& dir, const Params& params, const Vocabs& vocabs,
                     std::uint64_t step, const std::string& config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace anchored_kge
