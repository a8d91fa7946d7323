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

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchored_kge/eval.hpp"
#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/train.hpp"

namespace anchored_kge {

enum class PerturbKind { kDelete, kAdd };
std::string_view to_string(PerturbKind k);

struct PerturbSpec {
  PerturbKind kind = PerturbKind::kDelete;
  double ratio = 0;
  std::uint64_t seed = 0;
};

// "delete:0.2,add:0.4" -> specs sharing `seed`.
std::vector<PerturbSpec> parse_grid(std::string_view text, std::uint64_t seed);
std::vector<PerturbSpec> default_grid(std::uint64_t seed);

std::size_t perturbed_count(std::size_t size, double ratio);

// Removes floor(ratio * |D|) triples uniformly; survivors keep their order.
TripleSet delete_fraction(const TripleSet& train, const PerturbSpec& spec);

// Appends floor(ratio * |D|) novel triples, each an existing triple with its
// head or tail (fair coin) replaced by a uniform entity. Throws
// SaturationError when the rejection budget runs out.
TripleSet add_noise(const TripleSet& train, const PerturbSpec& spec);

TripleSet perturb(const TripleSet& train, const PerturbSpec& spec);

struct RobustnessCell {
  std::optional<PerturbSpec> spec;  // nullopt for the unperturbed baseline
  std::size_t train_size = 0;
  std::optional<MetricsReport> report;
  std::string status;  // "ok" or "failed: ..."
};

// Baseline row first, then one row per grid entry. Every cell retrains from
// scratch with `config` and evaluates with the same protocol seed.
std::vector<RobustnessCell> robustness_suite(const TripleSet& train, const TripleSet& test,
                                             const EnrichmentTable* anchors, const TrainConfig& config,
                                             const EvalProtocol& protocol, std::span<const PerturbSpec> grid,
                                             const std::function<void(const RobustnessCell&)>& on_cell = {});

// kind,ratio,mr,mrr,h1,h3,h10,auc,status
std::string robustness_csv(std::span<const RobustnessCell> cells);

}  // namespace anchored_kge
