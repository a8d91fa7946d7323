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

#include "anchored_kge/perturb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/error.hpp"

namespace anchored_kge {

std::string_view to_string(PerturbKind k) { return k == PerturbKind::kDelete ? "delete" : "add"; }

std::vector<PerturbSpec> parse_grid(std::string_view text, std::uint64_t seed) {
  std::vector<PerturbSpec> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    pos = comma + 1;
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw ConfigError(fmt::format("grid entry '{}' is not kind:ratio", item));
    PerturbSpec s;
    s.seed = seed;
    const auto kind = item.substr(0, colon);
    if (kind == "delete") s.kind = PerturbKind::kDelete;
    else if (kind == "add") s.kind = PerturbKind::kAdd;
    else throw ConfigError(fmt::format("grid entry '{}': kind must be delete or add", item));
    try {
      s.ratio = std::stod(std::string(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("grid entry '{}': bad ratio", item));
    }
    if (!(s.ratio >= 0 && s.ratio <= 1)) throw ConfigError(fmt::format("grid entry '{}': ratio not in [0,1]", item));
    out.push_back(s);
  }
  return out;
}

std::vector<PerturbSpec> default_grid(std::uint64_t seed) {
  std::vector<PerturbSpec> out;
  for (auto kind : {PerturbKind::kDelete, PerturbKind::kAdd}) {
    for (double r : {0.2, 0.4, 0.6}) out.push_back({kind, r, seed});
  }
  return out;
}

std::size_t perturbed_count(std::size_t size, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(size)));
}

TripleSet delete_fraction(const TripleSet& train, const PerturbSpec& spec) {
  if (!(spec.ratio >= 0 && spec.ratio < 1)) throw PreconditionError("delete ratio must be in [0, 1)");
  const std::size_t n = train.size();
  const std::size_t remove = perturbed_count(n, spec.ratio);
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < remove; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    removed[idx[i]] = true;
  }
  std::vector<Triple> out;
  out.reserve(n - remove);
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) out.push_back(train[i]);
  }
  return train.with_triples(std::move(out));
}

TripleSet add_noise(const TripleSet& train, const PerturbSpec& spec) {
  if (!(spec.ratio >= 0 && spec.ratio <= 1)) throw PreconditionError("add ratio must be in [0, 1]");
  const std::size_t n = train.size();
  const std::size_t add = perturbed_count(n, spec.ratio);
  if (add == 0) return train.with_triples({train.triples().begin(), train.triples().end()});
  const double ne = static_cast<double>(train.entities().size());
  const double space = ne * ne * static_cast<double>(train.relations().size());
  if (space - static_cast<double>(n) < static_cast<double>(add)) {
    throw SaturationError(fmt::format("only {} novel triples exist but {} were requested",
                                      space - static_cast<double>(n), add));
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_triple(0, n - 1);
  std::uniform_int_distribution<EntityIndex> pick_entity(0, static_cast<EntityIndex>(train.entities().size() - 1));
  std::bernoulli_distribution coin(0.5);

  std::vector<Triple> out(train.triples().begin(), train.triples().end());
  out.reserve(n + add);
  std::unordered_set<Triple, TripleHash> added;
  const std::size_t budget = 100 * add + 10000;
  std::size_t attempts = 0;
  while (added.size() < add) {
    if (++attempts > budget) {
      throw SaturationError(fmt::format("added {} of {} noise triples before exhausting {} draws", added.size(),
                                        add, budget));
    }
    Triple t = train[pick_triple(rng)];
    (coin(rng) ? t.head : t.tail) = pick_entity(rng);
    if (train.contains(t) || !added.insert(t).second) continue;
    out.push_back(t);
  }
  return train.with_triples(std::move(out));
}

TripleSet perturb(const TripleSet& train, const PerturbSpec& spec) {
  return spec.kind == PerturbKind::kDelete ? delete_fraction(train, spec) : add_noise(train, spec);
}

std::vector<RobustnessCell> robustness_suite(const TripleSet& train, const TripleSet& test,
                                             const EnrichmentTable* anchors, const TrainConfig& config,
                                             const EvalProtocol& protocol, std::span<const PerturbSpec> grid,
                                             const std::function<void(const RobustnessCell&)>& on_cell) {
  std::vector<RobustnessCell> cells;
  auto run = [&](std::optional<PerturbSpec> spec) {
    RobustnessCell cell;
    cell.spec = spec;
    try {
      const TripleSet noisy = spec ? perturb(train, *spec) : train;
      cell.train_size = noisy.size();
      const auto trained = anchored_kge::train(noisy, anchors, config);
      cell.report = evaluate(trained.params, test, protocol);
      cell.status = "ok";
    } catch (const Error& e) {
      cell.status = fmt::format("failed: {}", e.what());
      spdlog::error("robustness cell {}:{} failed: {}", spec ? to_string(spec->kind) : "none",
                    spec ? spec->ratio : 0.0, e.what());
    }
    if (on_cell) on_cell(cell);
    cells.push_back(std::move(cell));
  };
  run(std::nullopt);
  for (const auto& s : grid) run(s);
  return cells;
}

std::string robustness_csv(std::span<const RobustnessCell> cells) {
  std::string out = "kind,ratio,mr,mrr,h1,h3,h10,auc,status\n";
  for (const auto& c : cells) {
    const std::string kind = c.spec ? std::string(to_string(c.spec->kind)) : "none";
    const double ratio = c.spec ? c.spec->ratio : 0.0;
    if (c.report) {
      const auto& m = c.report->mean;
      out += fmt::format("{},{},{},{},{},{},{},{},{}\n", kind, ratio, format_full(m.mr), format_full(m.mrr),
                         format_full(m.hits.at(1)), format_full(m.hits.at(3)), format_full(m.hits.at(10)),
                         format_full(m.auc), c.status);
    } else {
      // Commas in an error message would break the row.
      std::string status = c.status;
      std::replace(status.begin(), status.end(), ',', ';');
      out += fmt::format("{},{},,,,,,,{}\n", kind, ratio, status);
    }
  }
  return out;
}

}  // namespace anchored_kge
