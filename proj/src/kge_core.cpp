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

#include "anchored_kge/kge_core.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "anchored_kge/enrich.hpp"
#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"
#include "anchored_kge/vector_io.hpp"

namespace anchored_kge {

ModelSpec parse_model(std::string_view name) {
  if (name == "TransE" || name == "TransE_l2") return {ModelKind::kTransE, 2};
  if (name == "TransE_l1") return {ModelKind::kTransE, 1};
  if (name == "DistMult") return {ModelKind::kDistMult, 2};
  if (name == "RotatE") return {ModelKind::kRotatE, 2};
  throw ConfigError(fmt::format("unknown model '{}' (TransE_l1|TransE_l2|DistMult|RotatE)", name));
}

std::string to_string(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::kTransE: return spec.p_norm == 1 ? "TransE_l1" : "TransE_l2";
    case ModelKind::kDistMult: return "DistMult";
    case ModelKind::kRotatE: return "RotatE";
  }
  return "TransE_l2";
}

std::size_t relation_width(const ModelSpec& spec, std::size_t entity_dim) {
  if (spec.kind == ModelKind::kRotatE) {
    if (entity_dim % 2 != 0) throw ShapeError("RotatE needs an even entity dimension");
    return entity_dim / 2;
  }
  return entity_dim;
}

template <typename Real>
ModelParams<Real> init_params(std::size_t num_entities, std::size_t num_relations, std::size_t dim,
                              const ModelSpec& spec, double gamma, const InitOptions& init) {
  if (dim == 0) throw PreconditionError("embedding dimension must be positive");
  if (!(gamma > 0) || !std::isfinite(gamma)) throw PreconditionError("gamma must be positive");
  if (spec.kind == ModelKind::kTransE && spec.p_norm != 1 && spec.p_norm != 2) {
    throw PreconditionError("TransE p-norm must be 1 or 2");
  }
  ModelParams<Real> p;
  p.model = spec;
  p.gamma = gamma;
  p.entities = Matrix<Real>(num_entities, dim);
  p.relations = Matrix<Real>(num_relations, relation_width(spec, dim));

  const double range = (gamma + 2.0) / static_cast<double>(dim);
  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> uniform(-range, range);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);

  if (init.anchors != nullptr) {
    const auto& anchors = *init.anchors;
    if (anchors.anchor_dim() != dim) {
      throw ShapeError(fmt::format("anchor dim {} != entity dim {}", anchors.anchor_dim(), dim));
    }
    if (anchors.size() != num_entities) {
      throw ShapeError(fmt::format("{} anchor rows for {} entities", anchors.size(), num_entities));
    }
    for (std::size_t i = 0; i < num_entities; ++i) {
      const auto a = anchors.anchor_vector(i);
      auto row = p.entities.row(i);
      for (std::size_t c = 0; c < dim; ++c) row[c] = static_cast<Real>(a[c]);
    }
  } else {
    for (auto& v : p.entities.data()) v = static_cast<Real>(uniform(rng));
  }
  for (auto& v : p.relations.data()) {
    v = static_cast<Real>(spec.kind == ModelKind::kRotatE ? phase(rng) : uniform(rng));
  }
  return p;
}

namespace {

template <typename Real>
void check_triple(const ModelParams<Real>& p, const Triple& t) {
  if (t.head >= p.entities.rows() || t.tail >= p.entities.rows() || t.relation >= p.relations.rows()) {
    throw PreconditionError(fmt::format("triple ({}, {}, {}) outside parameter tables", t.head,
                                        t.relation, t.tail));
  }
}

double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Shared kernel. The gradient scale is `weight(score)`; when `grads` is
// false the accumulators are ignored.
template <typename Real, bool grads, typename Weight>
double kernel(const ModelParams<Real>& p, const Triple& t, const Weight& weight, std::span<double> gh,
              std::span<double> gr, std::span<double> gt) {
  const auto h = p.entities.row(t.head);
  const auto r = p.relations.row(t.relation);
  const auto e = p.entities.row(t.tail);
  const std::size_t d = h.size();

  switch (p.model.kind) {
    case ModelKind::kTransE: {
      if (p.model.p_norm == 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::abs(double(h[i]) + double(r[i]) - double(e[i]));
        if constexpr (grads) {
          const double scale = weight(s);
          for (std::size_t i = 0; i < d; ++i) {
            const double g = scale * sign0(double(h[i]) + double(r[i]) - double(e[i]));
            gh[i] += g;
            gr[i] += g;
            gt[i] -= g;
          }
        }
        return s;
      }
      double sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = double(h[i]) + double(r[i]) - double(e[i]);
        sq += diff * diff;
      }
      const double s = std::sqrt(sq);
      if constexpr (grads) {
        if (s > 0.0) {
          const double inv = weight(s) / s;
          for (std::size_t i = 0; i < d; ++i) {
            const double g = inv * (double(h[i]) + double(r[i]) - double(e[i]));
            gh[i] += g;
            gr[i] += g;
            gt[i] -= g;
          }
        }
      }
      return s;
    }
    case ModelKind::kDistMult: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += double(h[i]) * double(r[i]) * double(e[i]);
      if constexpr (grads) {
        const double scale = weight(-s);
        for (std::size_t i = 0; i < d; ++i) {
          const double hi = h[i], ri = r[i], ei = e[i];
          gh[i] -= scale * ri * ei;
          gr[i] -= scale * hi * ei;
          gt[i] -= scale * hi * ri;
        }
      }
      return -s;
    }
    case ModelKind::kRotatE: {
      const std::size_t m = d / 2;
      thread_local std::vector<double> rot;  // rotated-minus-tail residual, [re; im]
      thread_local std::vector<double> cs;   // cos, sin per phase
      rot.resize(d);
      cs.resize(d);
      double sq = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double c = std::cos(double(r[j])), sn = std::sin(double(r[j]));
        cs[j] = c;
        cs[m + j] = sn;
        const double dre = double(h[j]) * c - double(h[m + j]) * sn - double(e[j]);
        const double dim = double(h[j]) * sn + double(h[m + j]) * c - double(e[m + j]);
        rot[j] = dre;
        rot[m + j] = dim;
        sq += dre * dre + dim * dim;
      }
      const double s = std::sqrt(sq);
      if constexpr (grads) {
        if (s > 0.0) {
          const double inv = weight(s) / s;
          for (std::size_t j = 0; j < m; ++j) {
            const double hre = h[j], him = h[m + j];
            const double c = cs[j], sn = cs[m + j];
            const double gre = inv * rot[j];
            const double gim = inv * rot[m + j];
            gh[j] += gre * c + gim * sn;
            gh[m + j] += -gre * sn + gim * c;
            gt[j] -= gre;
            gt[m + j] -= gim;
            gr[j] += gre * (-hre * sn - him * c) + gim * (hre * c - him * sn);
          }
        }
      }
      return s;
    }
  }
  return 0.0;
}

struct NoWeight {
  double operator()(double) const { return 0.0; }
};

}  // namespace

template <typename Real>
double score(const ModelParams<Real>& params, const Triple& t) {
  check_triple(params, t);
  return kernel<Real, false>(params, t, NoWeight{}, {}, {}, {});
}

template <typename Real>
double accumulate_score_gradient(const ModelParams<Real>& params, const Triple& t, double scale,
                                 std::span<double> grad_head, std::span<double> grad_relation,
                                 std::span<double> grad_tail) {
  return kernel<Real, true>(params, t, [scale](double) { return scale; }, grad_head, grad_relation, grad_tail);
}

template <typename Real>
double accumulate_weighted_gradient(const ModelParams<Real>& params, const Triple& t,
                                    const std::function<double(double)>& weight, std::span<double> grad_head,
                                    std::span<double> grad_relation, std::span<double> grad_tail) {
  return kernel<Real, true>(params, t, weight, grad_head, grad_relation, grad_tail);
}

template <typename Real>
ScoreGradients score_gradients(const ModelParams<Real>& params, const Triple& t) {
  check_triple(params, t);
  ScoreGradients g{std::vector<double>(params.entities.cols()),
                   std::vector<double>(params.relations.cols()),
                   std::vector<double>(params.entities.cols())};
  kernel<Real, true>(params, t, [](double) { return 1.0; }, g.head, g.relation, g.tail);
  return g;
}

template <typename Real>
std::vector<double> batch_score(const ModelParams<Real>& params, std::span<const Triple> triples) {
  std::vector<double> out;
  out.reserve(triples.size());
  for (const Triple& t : triples) out.push_back(score(params, t));
  return out;
}

#define ANCHORED_KGE_INSTANTIATE(Real)                                                            \
  template ModelParams<Real> init_params<Real>(std::size_t, std::size_t, std::size_t,            \
                                               const ModelSpec&, double, const InitOptions&);    \
  template double score<Real>(const ModelParams<Real>&, const Triple&);                           \
  template double accumulate_score_gradient<Real>(const ModelParams<Real>&, const Triple&, double, \
                                                  std::span<double>, std::span<double>,          \
                                                  std::span<double>);                            \
  template double accumulate_weighted_gradient<Real>(const ModelParams<Real>&, const Triple&,       \
                                                     const std::function<double(double)>&,        \
                                                     std::span<double>, std::span<double>,        \
                                                     std::span<double>);                          \
  template ScoreGradients score_gradients<Real>(const ModelParams<Real>&, const Triple&);         \
  template std::vector<double> batch_score<Real>(const ModelParams<Real>&, std::span<const Triple>);

ANCHORED_KGE_INSTANTIATE(float)
ANCHORED_KGE_INSTANTIATE(double)
#undef ANCHORED_KGE_INSTANTIATE

// ---------------------------------------------------------------- checkpoints

std::string vocab_hash(const Vocabs& vocabs) {
  return sha256_hex(vocabs.entities->digest() + vocabs.relations->digest());
}

void save_checkpoint(const std::filesystem::path& dir, const Params& params, const Vocabs& vocabs,
                     std::uint64_t step, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  write_vector_file(dir / "entities.kgev", params.entities, vocabs.entities->labels());
  write_vector_file(dir / "relations.kgev", params.relations, vocabs.relations->labels());
  const nlohmann::json meta = {{"kind", to_string(params.model)},
                               {"dim", params.dim()},
                               {"gamma", params.gamma},
                               {"step", step},
                               {"vocab_hash", vocab_hash(vocabs)},
                               {"config_hash", config_hash}};
  write_atomically(dir / "meta.json", [&](std::ostream& out) { out << meta.dump(2) << '\n'; });
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw FormatError("missing " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.meta.model = parse_model(meta.at("kind").get<std::string>());
    ck.meta.dim = meta.at("dim").get<std::size_t>();
    ck.meta.gamma = meta.at("gamma").get<double>();
    ck.meta.step = meta.at("step").get<std::uint64_t>();
    ck.meta.vocab_hash = meta.at("vocab_hash").get<std::string>();
    ck.meta.config_hash = meta.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  auto ents = read_vector_file(dir / "entities.kgev");
  auto rels = read_vector_file(dir / "relations.kgev");
  if (ents.values.cols() != ck.meta.dim ||
      rels.values.cols() != relation_width(ck.meta.model, ck.meta.dim)) {
    throw FormatError("checkpoint table widths disagree with meta.json");
  }
  ck.vocabs = {std::make_shared<const Vocabulary>(std::move(ents.labels)),
               std::make_shared<const Vocabulary>(std::move(rels.labels))};
  if (vocab_hash(ck.vocabs) != ck.meta.vocab_hash) throw FormatError("checkpoint vocabulary hash mismatch");
  ck.params = Params{ck.meta.model, ck.meta.gamma, std::move(ents.values), std::move(rels.values)};
  return ck;
}

}  // namespace anchored_kge
