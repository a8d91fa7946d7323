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

// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "anchored_kge/cli.hpp"
#include "anchored_kge/enrich.hpp"
#include "anchored_kge/eval.hpp"
#include "anchored_kge/kge_core.hpp"
#include "anchored_kge/perturb.hpp"
#include "anchored_kge/train.hpp"
#include "support.hpp"

using namespace akge_test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- oracles

double oracle_score(const Params64& p, const Triple& t) {
  auto h = p.entities.row(t.head);
  auto r = p.relations.row(t.relation);
  auto e = p.entities.row(t.tail);
  const std::size_t d = h.size();
  switch (p.model.kind) {
    case ModelKind::kTransE: {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += std::pow(std::abs(h[i] + r[i] - e[i]), p.model.p_norm);
      return std::pow(s, 1.0 / p.model.p_norm);
    }
    case ModelKind::kDistMult: {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += h[i] * r[i] * e[i];
      return -s;
    }
    case ModelKind::kRotatE: {
      const std::size_t m = d / 2;
      double s = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double re = h[i] * std::cos(r[i]) - h[m + i] * std::sin(r[i]) - e[i];
        const double im = h[i] * std::sin(r[i]) + h[m + i] * std::cos(r[i]) - e[m + i];
        s += re * re + im * im;
      }
      return std::sqrt(s);
    }
  }
  return 0;
}

double log_sigmoid(double x) { return std::log(1.0 / (1.0 + std::exp(-x))); }

Params64 random_params(ModelSpec spec, std::size_t ne, std::size_t nr, std::size_t dim, double gamma,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), phase(-3.0, 3.0);
  Params64 p{spec, gamma, Matrix<double>(ne, dim), Matrix<double>(nr, relation_width(spec, dim))};
  for (auto& x : p.entities.data()) x = u(rng);
  for (auto& x : p.relations.data()) x = spec.kind == ModelKind::kRotatE ? phase(rng) : u(rng);
  return p;
}

Triple random_triple(std::size_t ne, std::size_t nr, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> e(0, static_cast<std::uint32_t>(ne - 1)),
      r(0, static_cast<std::uint32_t>(nr - 1));
  return {e(rng), r(rng), e(rng)};
}

const std::vector<std::pair<std::string, ModelSpec>> kModels = {
    {"TransE_l1", {ModelKind::kTransE, 1}},
    {"TransE_l2", {ModelKind::kTransE, 2}},
    {"DistMult", {ModelKind::kDistMult, 2}},
    {"RotatE", {ModelKind::kRotatE, 2}},
};

// ---------------------------------------------------------------- 1

Outcome gradient_oracle() {
  const std::size_t ne = 6, nr = 2, dim = 8, batch = 3, nneg = 4;
  std::mt19937_64 rng(20261019);
  std::uniform_real_distribution<double> unit(0.2, 2.0), margin(1.0, 6.0);
  double worst = 0;
  std::string worst_at;
  std::size_t failures = 0, checked = 0;
  for (const auto& [name, spec] : kModels) {
    for (AnchorDistance dist : {AnchorDistance::kSquaredL2, AnchorDistance::kCosine, AnchorDistance::kKL}) {
      for (int inst = 0; inst < 200; ++inst) {
        Params64 p = random_params(spec, ne, nr, dim, margin(rng), rng);
        Matrix<float> concat(ne, 2 * dim);
        std::normal_distribution<float> g(0.0f, 1.0f);
        for (auto& x : concat.data()) x = g(rng);
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < ne; ++i) labels.push_back(fmt::format("X::{}", i));
        const EnrichmentTable anchors(labels, concat, dim);
        std::vector<Triple> pos;
        for (std::size_t i = 0; i < batch; ++i) pos.push_back(random_triple(ne, nr, rng));
        NegativeBatch negs;
        negs.neg_per_pos = nneg;
        for (std::size_t i = 0; i < batch; ++i) {
          negs.corrupted.push_back(CorruptionSide::kTail);
          for (std::size_t k = 0; k < nneg; ++k) negs.triples.push_back(random_triple(ne, nr, rng));
        }
        TrainConfig cfg;
        cfg.dim = dim;
        cfg.zeta1 = unit(rng);
        cfg.zeta2 = unit(rng);
        cfg.anchor_distance = dist;

        SparseGradient grad;
        compute_loss(p, pos, negs, &anchors, cfg, &grad);
        std::vector<double> analytic(p.entities.data().size() + p.relations.data().size(), 0.0);
        for (std::size_t s = 0; s < grad.entity_rows().size(); ++s) {
          auto gr = grad.entity_grad(s);
          std::copy(gr.begin(), gr.end(), analytic.begin() + grad.entity_rows()[s] * dim);
        }
        const std::size_t off = p.entities.data().size(), rw = p.relations.cols();
        for (std::size_t s = 0; s < grad.relation_rows().size(); ++s) {
          auto gr = grad.relation_grad(s);
          std::copy(gr.begin(), gr.end(), analytic.begin() + off + grad.relation_rows()[s] * rw);
        }
        std::vector<double> numeric(analytic.size());
        const double h = 1e-6;
        auto total = [&] { return compute_loss(p, pos, negs, &anchors, cfg, nullptr).total; };
        for (std::size_t i = 0; i < analytic.size(); ++i) {
          double& x = i < off ? p.entities.data()[i] : p.relations.data()[i - off];
          const double saved = x;
          x = saved + h;
          const double up = total();
          x = saved - h;
          const double down = total();
          x = saved;
          numeric[i] = (up - down) / (2 * h);
        }
        double diff = 0, na = 0, nn = 0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
          diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
          na += analytic[i] * analytic[i];
          nn += numeric[i] * numeric[i];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
        ++checked;
        if (rel >= 1e-5) ++failures;
        if (rel > worst) {
          worst = rel;
          worst_at = fmt::format("{}/{}", name, to_string(dist));
        }
      }
    }
  }
  return {failures == 0, fmt::format("{} instances, {} over 1e-5, worst rel err {:.2e} ({})", checked, failures,
                                     worst, worst_at)};
}

// ---------------------------------------------------------------- 2

Outcome loss_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> margin(1.0, 10.0);
  std::uniform_int_distribution<std::size_t> nneg(1, 16);
  double worst = 0;
  std::size_t failures = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto& spec = kModels[inst % kModels.size()].second;
    const Params64 p = random_params(spec, 12, 3, 10, margin(rng), rng);
    const Triple pos = random_triple(12, 3, rng);
    std::vector<Triple> negs;
    const std::size_t n = nneg(rng);
    for (std::size_t k = 0; k < n; ++k) negs.push_back({pos.head, pos.relation, random_triple(12, 3, rng).tail});
    // -[ log s(gamma - f_pos) - 1/|N| sum log s(f_neg - gamma) ]
    const double l_pos = log_sigmoid(p.gamma - oracle_score(p, pos));
    double sum = 0;
    for (const auto& t : negs) sum += log_sigmoid(oracle_score(p, t) - p.gamma);
    const double l_neg = -sum / static_cast<double>(n);
    const double expected = -(l_pos + (-l_neg));
    const double got = link_loss(p, pos, negs);
    const double rel = std::abs(got - expected) / std::abs(expected);
    worst = std::max(worst, rel);
    if (!(rel < 1e-10)) ++failures;
  }
  return {failures == 0, fmt::format("1000 instances, {} over 1e-10, worst rel err {:.2e}", failures, worst)};
}

// ---------------------------------------------------------------- 3

Outcome memorization() {
  const TripleSet kg = typed_kg(3);
  std::vector<EntityIndex> all(kg.entities().size());
  std::iota(all.begin(), all.end(), 0u);
  std::vector<RelationIndex> rels(kg.relations().size());
  std::iota(rels.begin(), rels.end(), 0u);
  bool ok = true;
  std::string detail;
  for (const char* model : {"TransE_l2", "DistMult", "RotatE"}) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg;
    cfg.model = model;
    cfg.dim = 64;
    cfg.gamma = std::string(model) == "DistMult" ? 1.0 : 6.0;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 250;
    cfg.neg_per_pos = 32;
    cfg.steps = 2000;
    cfg.zeta1 = 0;
    cfg.init = InitKind::kRandom;
    cfg.seed = 11;
    cfg.log_interval = 1000;
    const auto res = train(kg, nullptr, cfg);
    EvalProtocol proto;
    proto.candidate_pool = all;
    proto.relations = rels;
    proto.trials = 1;
    proto.mode = EvalMode::kFilteredFull;
    proto.known = &kg;
    const auto report = evaluate(res.params, kg, proto);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = report.mean.mrr > 0.9 && secs < 60.0;
    ok = ok && pass;
    detail += fmt::format("{}{} MRR {:.3f} in {:.1f}s", detail.empty() ? "" : "; ", model, report.mean.mrr, secs);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 4

Outcome ranking_oracle() {
  std::mt19937_64 rng(99);
  const std::size_t ne = 80, nr = 3;
  const Params64 p = random_params({ModelKind::kTransE, 2}, ne, nr, 16, 6.0, rng);
  const Params pf = p.cast<float>();
  std::vector<std::string> ents, rels{"a::X:Y", "b::X:Y", "c::X:Y"};
  for (std::size_t i = 0; i < ne; ++i) ents.push_back(fmt::format("{}::{}", i % 2 ? "Y" : "X", i));
  const auto vocabs = make_vocabs(ents, rels);
  std::vector<Triple> triples;
  std::set<std::tuple<int, int, int>> seen;
  while (triples.size() < 50) {
    auto t = random_triple(ne, nr, rng);
    if (seen.insert({t.head, t.relation, t.tail}).second) triples.push_back(t);
  }
  const TripleSet test(triples, Split::kTest, vocabs);
  EvalProtocol proto;
  for (std::uint32_t i = 0; i < ne; ++i) proto.candidate_pool.push_back(i);
  proto.relations = {0, 1, 2};
  proto.trials = 1;
  proto.mode = EvalMode::kFilteredFull;
  proto.known = &test;
  const auto report = evaluate(pf, test, proto);

  // Brute force: sort every candidate score, rank = sorted position of the true tail.
  std::vector<double> ranks, aucs;
  for (const auto& t : triples) {
    std::vector<std::pair<double, bool>> cand;
    for (std::uint32_t e = 0; e < ne; ++e) {
      const Triple c{t.head, t.relation, e};
      if (e != t.tail && test.contains(c)) continue;
      cand.push_back({score(pf, c), e == t.tail});
    }
    std::sort(cand.begin(), cand.end());
    const auto it = std::find_if(cand.begin(), cand.end(), [](const auto& c) { return c.second; });
    ranks.push_back(static_cast<double>(it - cand.begin() + 1));
    double good = 0, pairs = 0;
    for (const auto& c : cand) {
      if (c.second) continue;
      pairs += 1;
      if (it->first < c.first) good += 1;
      else if (it->first == c.first) good += 0.5;
    }
    aucs.push_back(good / pairs);
  }
  const auto n = static_cast<double>(ranks.size());
  double mr = 0, mrr = 0, auc = 0, h1 = 0, h3 = 0, h10 = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    mr += ranks[i] / n;
    mrr += 1.0 / ranks[i] / n;
    auc += aucs[i] / n;
    h1 += (ranks[i] <= 1) / n;
    h3 += (ranks[i] <= 3) / n;
    h10 += (ranks[i] <= 10) / n;
  }
  // Per-triple ranks, exactly.
  const auto per = evaluate_trial(pf, test.triples(), proto, 0);
  bool ranks_equal = per.size() == ranks.size();
  for (std::size_t i = 0; ranks_equal && i < per.size(); ++i) {
    ranks_equal = static_cast<double>(per[i].rank) == ranks[i];
  }
  const auto& m = report.mean;
  const double err = std::max({std::abs(m.mr - mr), std::abs(m.mrr - mrr), std::abs(m.auc - auc),
                               std::abs(m.hits.at(1) - h1), std::abs(m.hits.at(3) - h3),
                               std::abs(m.hits.at(10) - h10)});
  return {ranks_equal && err <= 1e-12,
          fmt::format("50 triples, ranks {}, max metric err {:.1e} (MRR {:.4f}, AUC {:.4f})",
                      ranks_equal ? "identical" : "DIFFER", err, mrr, auc)};
}

// ---------------------------------------------------------------- 5

Outcome anchoring_direction() {
  const std::size_t ne = 10, dim = 12;
  std::vector<std::string> ents;
  for (std::size_t i = 0; i < ne; ++i) ents.push_back(fmt::format("X::{}", i));
  const auto vocabs = make_vocabs(ents, {"r::X:X"});
  std::vector<Triple> pos;
  for (std::uint32_t i = 0; i < ne; i += 2) pos.push_back({i, 0, i + 1});
  std::mt19937_64 rng(5);
  Matrix<float> concat(ne, 2 * dim);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (auto& x : concat.data()) x = g(rng);
  const EnrichmentTable anchors(ents, concat, dim);
  TrainConfig cfg;
  cfg.dim = dim;
  cfg.zeta1 = 1.0;
  cfg.zeta2 = 0.0;
  cfg.optimizer = OptimizerKind::kSGD;
  cfg.learning_rate = 0.5;
  cfg.anchor_distance = AnchorDistance::kSquaredL2;
  auto params = init_params<double>(ne, 1, dim, {ModelKind::kTransE, 2}, cfg.gamma, {17, nullptr});
  auto state = OptimizerState::for_params(ne, 1);
  auto mean_dist = [&] {
    double s = 0;
    for (std::size_t i = 0; i < ne; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = params.entities(i, j) - anchors.anchors()(i, j);
        s += d * d;
      }
    }
    return s / static_cast<double>(ne);
  };
  const double initial = mean_dist();
  double prev = initial;
  bool strictly = true;
  for (int step = 0; step < 100; ++step) {
    auto negs = sample_negatives(pos, ne, 4, CorruptionSide::kBoth, rng);
    train_step(params, pos, negs, &anchors, cfg, state, static_cast<std::size_t>(step));
    const double now = mean_dist();
    strictly = strictly && now < prev;
    prev = now;
  }
  const double ratio = prev / initial;
  return {strictly && ratio < 1e-6,
          fmt::format("initial {:.4g}, final {:.4g} (ratio {:.2e}), strictly decreasing: {}", initial, prev, ratio,
                      strictly ? "yes" : "no")};
}

// ---------------------------------------------------------------- 6

EnrichmentTable cluster_anchors(const ClusteredKg& kg, std::size_t text_dim, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  Matrix<float> centers(kg.clusters, 2 * text_dim);
  for (auto& x : centers.data()) x = g(rng);
  const auto& labels = kg.train.entities().labels();
  Matrix<float> concat(labels.size(), 2 * text_dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < 2 * text_dim; ++j) {
      concat(i, j) = centers(static_cast<std::size_t>(kg.cluster[i]), j) + static_cast<float>(noise) * g(rng);
    }
  }
  return EnrichmentTable(labels, concat, text_dim);
}

TrainConfig cluster_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.model = "TransE_l2";
  cfg.dim = 32;
  cfg.gamma = 6.0;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 128;
  cfg.neg_per_pos = 32;
  cfg.steps = 1500;
  cfg.zeta1 = 0.1;
  cfg.seed = seed;
  cfg.log_interval = 500;
  return cfg;
}

EvalProtocol disease_protocol(const TripleSet& ref, std::uint64_t seed) {
  EvalProtocol proto;
  proto.candidate_pool = build_type_index(ref.entities()).pool("Disease");
  proto.relations = {0};
  proto.seed = seed;
  return proto;
}

Outcome semantic_advantage() {
  int wins = 0;
  double sum_gain = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto kg = clustered_kg(seed, 10, 50, 2);
    const auto anchors = cluster_anchors(kg, 32, 0.5, seed + 100);
    auto anchored_cfg = cluster_config(seed);
    auto base_cfg = anchored_cfg;
    base_cfg.zeta1 = 0;
    base_cfg.init = InitKind::kRandom;
    const auto proto = disease_protocol(kg.test, seed);
    const double a = evaluate(train(kg.train, &anchors, anchored_cfg).params, kg.test, proto).mean.mrr;
    const double b = evaluate(train(kg.train, nullptr, base_cfg).params, kg.test, proto).mean.mrr;
    wins += a > b;
    sum_gain += a - b;
    detail += fmt::format("{}s{} {:.3f}/{:.3f}", detail.empty() ? "" : "; ", seed, a, b);
  }
  const double mean_gain = sum_gain / 5;
  return {wins >= 4 && mean_gain > 0,
          fmt::format("anchored beats baseline in {}/5 seeds, mean MRR gain {:+.3f} (anchored/base: {})", wins,
                      mean_gain, detail)};
}

// ---------------------------------------------------------------- 7

Outcome robustness_grid() {
  int not_better = 0;
  bool invariants = true;
  bool shape = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto kg = clustered_kg(seed, 10, 50, 3);
    auto cfg = cluster_config(seed);
    cfg.zeta1 = 0;
    cfg.init = InitKind::kRandom;
    cfg.steps = 1000;
    const auto proto = disease_protocol(kg.test, seed);
    const auto grid = default_grid(seed);
    const auto test_before = std::vector<Triple>(kg.test.triples().begin(), kg.test.triples().end());
    const auto cells = robustness_suite(kg.train, kg.test, nullptr, cfg, proto, grid);
    shape = shape && cells.size() == 7 && !cells[0].spec;
    for (const auto& c : cells) shape = shape && c.report.has_value();
    invariants = invariants && std::equal(test_before.begin(), test_before.end(), kg.test.triples().begin());
    const std::size_t n = kg.train.size();
    for (const auto& spec : grid) {
      const auto out = perturb(kg.train, spec);
      const auto k = static_cast<std::size_t>(std::floor(spec.ratio * static_cast<double>(n)));
      if (spec.kind == PerturbKind::kDelete) {
        invariants = invariants && out.size() + k == n;
        for (const auto& t : out.triples()) invariants = invariants && kg.train.contains(t);
      } else {
        invariants = invariants && out.size() == n + k;
        std::size_t fresh = 0;
        for (const auto& t : out.triples()) fresh += !kg.train.contains(t);
        for (const auto& t : kg.train.triples()) invariants = invariants && out.contains(t);
        invariants = invariants && fresh == k;
      }
    }
    if (!shape) break;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      invariants = invariants && cells[i].train_size == perturb(kg.train, *cells[i].spec).size();
    }
    const auto& add60 = *std::find_if(cells.begin(), cells.end(), [](const auto& c) {
      return c.spec && c.spec->kind == PerturbKind::kAdd && c.spec->ratio == 0.6;
    });
    const double base = cells[0].report->mean.mrr, noisy = add60.report->mean.mrr;
    not_better += noisy <= base;
    detail += fmt::format("{}s{} {:.3f}->{:.3f}", detail.empty() ? "" : "; ", seed, base, noisy);
  }
  return {shape && invariants && not_better >= 4,
          fmt::format("7-row grids {}, invariants {}, add-60% MRR <= baseline in {}/5 (baseline->add60: {})",
                      shape ? "ok" : "BROKEN", invariants ? "hold" : "VIOLATED", not_better, detail)};
}

// ---------------------------------------------------------------- CLI helpers

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void write_small_kg(const TempDir& dir, std::uint64_t seed) {
  const auto kg = clustered_kg(seed, 2, 10, 2, 0.25);
  write_triples(dir / "train.tsv", kg.train);
  write_triples(dir / "test.tsv", kg.test);
}

// ---------------------------------------------------------------- 8

std::size_t whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::size_t mask_tokens(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) n += w == "[MASK]";
  return n;
}

Outcome mask_ablation() {
  MockLlmServer server;
  TempDir dir;
  write_small_kg(dir, 4);
  ScopedEnv key(kApiKeyEnv, "test-key");
  const auto e = cli({"enrich", "--triples", (dir / "train.tsv").string(), "--triples", (dir / "test.tsv").string(),
                      "--endpoint", server.base_url(), "--cache", (dir / "cache").string(), "--out",
                      (dir / "enrich.kgev").string(), "--backoff-ms", "1"});
  if (e.code != 0) return {false, "enrich failed: " + e.err};
  const auto cfg = dir / "train.toml";
  write_text(cfg, "dim = 16\ngamma = 6.0\nbatch_size = 16\nneg_per_pos = 8\nsteps = 200\nzeta1 = 0.1\n");
  const auto m = cli({"mask-ablate", "--cache", (dir / "cache").string(), "--train", (dir / "train.tsv").string(),
                      "--test", (dir / "test.tsv").string(), "--endpoint", server.base_url(), "--config",
                      cfg.string(), "--num-negatives", "5", "--trials", "2", "--seed", "3", "--relations", "treats::Compound:Disease", "--out",
                      (dir / "mask.csv").string(), "--backoff-ms", "1"});
  if (m.code != 0) return {false, "mask-ablate failed: " + m.err};
  std::istringstream csv(read_text(dir / "mask.csv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  const bool four_rows = lines.size() == 5;

  DescriptionCache cache(dir / "cache" / "descriptions.jsonl");
  const auto records = cache.records();
  std::size_t mismatches = 0, descriptions = 0;
  for (double ratio : {0.0, 0.2, 0.4, 0.6}) {
    const auto masked = mask_descriptions(records, ratio, 3);
    for (std::size_t i = 0; i < records.size(); ++i) {
      ++descriptions;
      const auto n = whitespace_tokens(records[i].text);
      const auto want = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
      if (mask_tokens(masked[i].text) != want || whitespace_tokens(masked[i].text) != n) ++mismatches;
    }
  }
  // Totals in the table must agree with the same per-description counts.
  bool totals_ok = four_rows;
  for (std::size_t row = 1; totals_ok && row < lines.size(); ++row) {
    std::vector<std::string> f;
    std::stringstream ss(lines[row]);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    const double ratio = std::stod(f.at(0));
    std::size_t want = 0, total = 0;
    for (const auto& r : records) {
      const auto n = whitespace_tokens(r.text);
      want += static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
      total += n;
    }
    totals_ok = std::stoul(f.at(7)) == want && std::stoul(f.at(8)) == total;
  }
  return {four_rows && totals_ok && mismatches == 0,
          fmt::format("{} table rows, {} descriptions x 4 ratios checked, {} count mismatches, totals {}",
                      lines.empty() ? 0 : lines.size() - 1, records.size(), mismatches,
                      totals_ok ? "match" : "DIFFER")};
}

// ---------------------------------------------------------------- 9

const char* kStructuredOracle =
    "Act as a biomedical knowledge graph specialist. Generate structured, for input biological entities using "
    "this template:\n**Output Structure:**\n1. Background: Classification & core biological significance\n2. "
    "Appearance: Key structural/morphological features (if applicable)\n3. Clinical Relevance: "
    "Diagnostic/therapeutic applications (if exists)\n**Requirements:**\n→ Maintain scientific accuracy\n"
    "→ Use bullet-resistant phrasing (no markdown)\n→ Separate sections with semicolons (;)\n→ "
    "Exclude disclaimers/examples\n**Response Example Format:**\nBackground: [2-3 sentences];\nAppearance: [1-2 "
    "attributes];\nClinical: [1-2 applications]\nInput: \"";

Outcome enrichment_integration() {
  MockLlmServer server;
  TempDir dir;
  const auto kg = clustered_kg(9, 1, 10, 5, 0.0);
  write_triples(dir / "kg.tsv", kg.train);
  ScopedEnv key(kApiKeyEnv, "test-key");
  const std::vector<std::string> args = {"enrich", "--triples", (dir / "kg.tsv").string(), "--endpoint",
                                         server.base_url(), "--prompt", "structured", "--cache",
                                         (dir / "cache").string(), "--out", (dir / "enrich.kgev").string(),
                                         "--backoff-ms", "1"};
  const auto cold = cli(args);
  const std::size_t cold_chat = server.chat_requests(), cold_embed = server.embed_requests();
  const auto bodies = server.chat_bodies();
  server.reset_counts();
  const auto warm = cli(args);
  const std::size_t warm_total = server.chat_requests() + server.embed_requests();

  std::set<std::string> expected_bodies;
  for (const auto& label : kg.train.entities().labels()) {
    nlohmann::json body = {{"model", "gpt-4o-mini"},
                           {"messages", {{{"role", "user"}, {"content", kStructuredOracle + label + "\""}}}},
                           {"temperature", 0.7}};
    expected_bodies.insert(body.dump());
  }
  const std::set<std::string> got(bodies.begin(), bodies.end());
  const bool bodies_ok = got == expected_bodies;
  const bool ok = cold.code == 0 && warm.code == 0 && cold_chat + cold_embed == 30 && cold_chat == 10 &&
                  warm_total == 0 && bodies_ok && kg.train.entities().size() == 10;
  return {ok, fmt::format("{} entities; cold {} requests ({} chat, {} embed), warm {}; chat bodies {}",
                          kg.train.entities().size(), cold_chat + cold_embed, cold_chat, cold_embed, warm_total,
                          bodies_ok ? "byte-identical" : "DIFFER")};
}

// ---------------------------------------------------------------- 10

Outcome determinism() {
  MockLlmServer server;
  TempDir dir;
  write_small_kg(dir, 2);
  ScopedEnv key(kApiKeyEnv, "test-key");
  const auto tsv = (dir / "train.tsv").string(), test = (dir / "test.tsv").string();
  cli({"enrich", "--triples", tsv, "--triples", test, "--endpoint", server.base_url(), "--cache",
       (dir / "cache").string(), "--out", (dir / "warm.kgev").string(), "--backoff-ms", "1"});
  write_text(dir / "cfg.toml", "dim = 16\ngamma = 6.0\nbatch_size = 16\nneg_per_pos = 8\nsteps = 150\n");
  const auto cfg = (dir / "cfg.toml").string();
  std::vector<std::string> compared;
  std::size_t differing = 0;
  int failures = 0;
  for (int run = 0; run < 2; ++run) {
    const auto r = dir / fmt::format("run{}", run);
    fs::create_directories(r);
    const auto s = [&](const char* n) { return (r / n).string(); };
    const std::vector<std::vector<std::string>> commands = {
        {"enrich", "--triples", tsv, "--triples", test, "--offline", "--cache", (dir / "cache").string(), "--out",
         s("enrich.kgev")},
        {"train", "--triples", tsv, "--extra-triples", test, "--enrichment", s("enrich.kgev"), "--config", cfg,
         "--checkpoint-dir", s("ckpt"), "--seed", "5", "--threads", "1"},
        {"eval", "--checkpoint", s("ckpt"), "--test", test, "--num-negatives", "5", "--seed", "5", "--out",
         s("report"), "--threads", "1", "--relations", "treats::Compound:Disease"},
        {"robust", "--train", tsv, "--test", test, "--enrichment", s("enrich.kgev"), "--config", cfg,
         "--num-negatives", "5", "--trials", "2", "--grid", "delete:0.2,add:0.4", "--seed", "5", "--out",
         s("robust.csv"), "--threads", "1", "--relations", "treats::Compound:Disease"},
        {"mask-ablate", "--cache", (dir / "cache").string(), "--train", tsv, "--test", test, "--endpoint",
         server.base_url(), "--backoff-ms", "1",
         "--ratios", "0,0.4", "--config", cfg, "--num-negatives", "5", "--trials", "2", "--seed", "5", "--out",
         s("mask.csv"), "--relations", "treats::Compound:Disease", "--threads", "1"},
        {"repurpose", "--checkpoint", s("ckpt"), "--entity", "Disease::d00_00", "--top-k", "5", "--relations",
         "treats::Compound:Disease", "--out", s("repurpose.csv")},
    };
    for (const auto& c : commands) {
      const auto res = cli(c);
      if (res.code != 0) {
        ++failures;
        spdlog::error("{} exited {}: {}", c[0], res.code, res.err);
      }
    }
  }
  const std::vector<std::string> files = {"enrich.kgev",          "enrich.kgev.tsv",     "ckpt/entities.kgev",
                                          "ckpt/relations.kgev", "ckpt/meta.json",      "report.csv",
                                          "report.json",          "robust.csv",          "robust.csv.json",
                                          "mask.csv",             "repurpose.csv"};
  for (const auto& f : files) {
    const auto a = dir / "run0" / f, b = dir / "run1" / f;
    if (!fs::exists(a) || read_text(a) != read_text(b)) {
      ++differing;
      compared.push_back(f);
    }
  }
  return {failures == 0 && differing == 0,
          fmt::format("6 commands x 2 runs, {} non-zero exits, {}/{} artefacts bitwise identical{}", failures,
                      files.size() - differing, files.size(),
                      compared.empty() ? "" : fmt::format(" (differ or missing: {})", fmt::join(compared, ", ")))};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient oracle", 30, gradient_oracle},
      {2, "loss transcription oracle", 5, loss_oracle},
      {3, "memorization", 180, memorization},
      {4, "ranking oracle", 60, ranking_oracle},
      {5, "anchoring direction", 60, anchoring_direction},
      {6, "semantic advantage", 300, semantic_advantage},
      {7, "robustness grid", 600, robustness_grid},
      {8, "mask ablation shape", 120, mask_ablation},
      {9, "enrichment integration", 60, enrichment_integration},
      {10, "determinism", 300, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.budget_s;
    failed += !pass;
    std::cout << fmt::format("[{}] criterion {:>2}: {} ({}; {:.1f}s of {:.0f}s budget)\n", pass ? "PASS" : "FAIL",
                             c.id, c.name, o.detail, secs, c.budget_s)
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
