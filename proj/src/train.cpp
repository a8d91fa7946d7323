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

#include "anchored_kge/train.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/error.hpp"
#include "anchored_kge/util.hpp"

namespace anchored_kge {

std::string_view to_string(AnchorDistance d) {
  switch (d) {
    case AnchorDistance::kSquaredL2: return "SquaredL2";
    case AnchorDistance::kCosine: return "Cosine";
    case AnchorDistance::kKL: return "KL";
  }
  return "SquaredL2";
}

std::string_view to_string(CorruptionSide s) {
  switch (s) {
    case CorruptionSide::kTail: return "tail";
    case CorruptionSide::kHead: return "head";
    case CorruptionSide::kBoth: return "both";
  }
  return "both";
}

std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::kAdagrad ? "Adagrad" : "SGD"; }
std::string_view to_string(InitKind i) { return i == InitKind::kText ? "text" : "random"; }

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  const auto spec = parse_model(model);
  if (dim == 0) fail("dim must be positive");
  if (spec.kind == ModelKind::kRotatE && dim % 2 != 0) fail("RotatE needs an even dim");
  if (!std::isfinite(zeta1) || zeta1 < 0) fail("zeta1 must be finite and >= 0");
  if (!std::isfinite(zeta2) || zeta2 < 0) fail("zeta2 must be finite and >= 0");
  if (!std::isfinite(gamma) || gamma <= 0) fail("gamma must be finite and > 0");
  if (!std::isfinite(learning_rate) || learning_rate < 0) fail("learning_rate must be finite and >= 0");
  if (batch_size == 0) fail("batch_size must be positive");
  if (neg_per_pos == 0) fail("neg_per_pos must be positive");
  if (threads == 0) fail("threads must be positive");
  if (log_interval == 0) fail("log_interval must be positive");
  if (!std::isfinite(adagrad_epsilon) || adagrad_epsilon <= 0) fail("adagrad_epsilon must be > 0");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("config key '{}': cannot parse '{}'", key, v));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(fmt::format("config key '{}': expected true/false, got '{}'", key, v));
}

template <typename E>
E parse_enum(std::string_view key, std::string_view v, std::initializer_list<E> options) {
  for (E e : options) {
    if (to_string(e) == v) return e;
  }
  std::vector<std::string> names;
  for (E e : options) names.emplace_back(to_string(e));
  throw ConfigError(fmt::format("config key '{}': '{}' not one of {}", key, v, fmt::join(names, "|")));
}

}  // namespace

TrainConfig parse_config(std::string_view text, TrainConfig c) {
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    // strip a trailing comment that is not inside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') throw ConfigError(fmt::format("config line {}: tables are not supported", lineno));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
    const auto key = trim(line.substr(0, eq));
    auto v = trim(line.substr(eq + 1));
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);

    if (key == "model") c.model = std::string(v);
    else if (key == "dim") c.dim = parse_number<std::size_t>(key, v);
    else if (key == "zeta1") c.zeta1 = parse_number<double>(key, v);
    else if (key == "zeta2") c.zeta2 = parse_number<double>(key, v);
    else if (key == "gamma") c.gamma = parse_number<double>(key, v);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "neg_per_pos") c.neg_per_pos = parse_number<std::size_t>(key, v);
    else if (key == "steps") c.steps = parse_number<std::uint64_t>(key, v);
    else if (key == "anchor_distance")
      c.anchor_distance = parse_enum(key, v, {AnchorDistance::kSquaredL2, AnchorDistance::kCosine, AnchorDistance::kKL});
    else if (key == "corruption_side")
      c.corruption_side = parse_enum(key, v, {CorruptionSide::kTail, CorruptionSide::kHead, CorruptionSide::kBoth});
    else if (key == "optimizer") c.optimizer = parse_enum(key, v, {OptimizerKind::kAdagrad, OptimizerKind::kSGD});
    else if (key == "init") c.init = parse_enum(key, v, {InitKind::kText, InitKind::kRandom});
    else if (key == "filter_negatives") c.filter_negatives = parse_bool(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "threads") c.threads = parse_number<std::size_t>(key, v);
    else if (key == "log_interval") c.log_interval = parse_number<std::uint64_t>(key, v);
    else if (key == "checkpoint_interval") c.checkpoint_interval = parse_number<std::uint64_t>(key, v);
    else if (key == "adagrad_epsilon") c.adagrad_epsilon = parse_number<double>(key, v);
    else throw ConfigError(fmt::format("config line {}: unknown key '{}'", lineno, key));
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const TrainConfig& c) {
  std::string out;
  out += fmt::format("model = \"{}\"\n", c.model);
  out += fmt::format("dim = {}\n", c.dim);
  out += fmt::format("zeta1 = {}\n", c.zeta1);
  out += fmt::format("zeta2 = {}\n", c.zeta2);
  out += fmt::format("gamma = {}\n", c.gamma);
  out += fmt::format("learning_rate = {}\n", c.learning_rate);
  out += fmt::format("batch_size = {}\n", c.batch_size);
  out += fmt::format("neg_per_pos = {}\n", c.neg_per_pos);
  out += fmt::format("steps = {}\n", c.steps);
  out += fmt::format("anchor_distance = \"{}\"\n", to_string(c.anchor_distance));
  out += fmt::format("corruption_side = \"{}\"\n", to_string(c.corruption_side));
  out += fmt::format("optimizer = \"{}\"\n", to_string(c.optimizer));
  out += fmt::format("init = \"{}\"\n", to_string(c.init));
  out += fmt::format("filter_negatives = {}\n", c.filter_negatives);
  out += fmt::format("seed = {}\n", c.seed);
  out += fmt::format("threads = {}\n", c.threads);
  out += fmt::format("log_interval = {}\n", c.log_interval);
  out += fmt::format("checkpoint_interval = {}\n", c.checkpoint_interval);
  out += fmt::format("adagrad_epsilon = {}\n", c.adagrad_epsilon);
  return out;
}

std::string config_hash(const TrainConfig& config) { return sha256_hex(to_config_text(config)); }

// ---------------------------------------------------------------- sampling

NegativeBatch sample_negatives(std::span<const Triple> positives, std::size_t num_entities,
                               std::size_t neg_per_pos, CorruptionSide side, std::mt19937_64& rng,
                               const TripleSet* known) {
  if (neg_per_pos == 0) throw PreconditionError("neg_per_pos must be >= 1");
  if (num_entities == 0) throw PreconditionError("cannot sample negatives from an empty vocabulary");
  if (num_entities == 1) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      spdlog::warn("negative sampling over a single entity: every corruption equals the original");
    }
  }
  constexpr int kMaxRedraws = 16;
  NegativeBatch out;
  out.neg_per_pos = neg_per_pos;
  out.triples.reserve(positives.size() * neg_per_pos);
  out.corrupted.reserve(positives.size());
  std::uniform_int_distribution<EntityIndex> pick(0, static_cast<EntityIndex>(num_entities - 1));
  for (std::size_t i = 0; i < positives.size(); ++i) {
    CorruptionSide s = side;
    if (side == CorruptionSide::kBoth) s = i % 2 == 0 ? CorruptionSide::kTail : CorruptionSide::kHead;
    out.corrupted.push_back(s);
    for (std::size_t k = 0; k < neg_per_pos; ++k) {
      Triple neg = positives[i];
      for (int attempt = 0;; ++attempt) {
        const EntityIndex e = pick(rng);
        (s == CorruptionSide::kTail ? neg.tail : neg.head) = e;
        if (known == nullptr || attempt >= kMaxRedraws || !known->contains(neg)) break;
      }
      out.triples.push_back(neg);
    }
  }
  return out;
}

// ---------------------------------------------------------------- losses

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename A, typename B>
double squared_distance(std::span<A> a, std::span<B> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s;
}

template <typename T>
std::vector<double> log_softmax(std::span<T> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto v : x) mx = std::max(mx, double(v));
  double z = 0;
  for (auto v : x) z += std::exp(double(v) - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = double(x[i]) - lz;
  return out;
}

// Distance and, when grad is non-empty, += scale * d/d(entity).
// Returns nullopt for a degenerate (zero-norm) cosine pair.
template <typename Real>
std::optional<double> anchor_distance(std::span<const Real> e, std::span<const float> v,
                                      AnchorDistance kind, double scale, std::span<double> grad) {
  switch (kind) {
    case AnchorDistance::kSquaredL2: {
      const double d = squared_distance(e, v);
      if (!grad.empty()) {
        for (std::size_t i = 0; i < e.size(); ++i) grad[i] += scale * 2.0 * (double(e[i]) - double(v[i]));
      }
      return d;
    }
    case AnchorDistance::kCosine: {
      double ee = 0, vv = 0, ev = 0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        ee += double(e[i]) * double(e[i]);
        vv += double(v[i]) * double(v[i]);
        ev += double(e[i]) * double(v[i]);
      }
      if (ee == 0.0 || vv == 0.0) return std::nullopt;
      const double ne = std::sqrt(ee), nv = std::sqrt(vv);
      const double cos = ev / (ne * nv);
      if (!grad.empty()) {
        for (std::size_t i = 0; i < e.size(); ++i) {
          grad[i] -= scale * (double(v[i]) / (ne * nv) - cos * double(e[i]) / ee);
        }
      }
      return 1.0 - cos;
    }
    case AnchorDistance::kKL: {
      // KL(softmax(v) || softmax(e))
      const auto lp = log_softmax(v);
      const auto lq = log_softmax(e);
      double kl = 0;
      for (std::size_t i = 0; i < e.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
      if (!grad.empty()) {
        for (std::size_t i = 0; i < e.size(); ++i) grad[i] += scale * (std::exp(lq[i]) - std::exp(lp[i]));
      }
      return std::max(kl, 0.0);
    }
  }
  return 0.0;
}

std::atomic<bool> g_cosine_warned{false};

}  // namespace

template <typename Real>
double link_loss(const ModelParams<Real>& params, const Triple& positive,
                 std::span<const Triple> negatives) {
  if (negatives.empty()) throw PreconditionError("link_loss needs at least one negative");
  const double g = params.gamma;
  double neg = 0;
  for (const Triple& t : negatives) neg += softplus(g - score(params, t));
  return softplus(score(params, positive) - g) + neg / static_cast<double>(negatives.size());
}

std::vector<EntityIndex> batch_entities(std::span<const Triple> positives) {
  std::vector<EntityIndex> out;
  std::unordered_map<EntityIndex, bool> seen;
  for (const Triple& t : positives) {
    if (seen.emplace(t.head, true).second) out.push_back(t.head);
    if (seen.emplace(t.tail, true).second) out.push_back(t.tail);
  }
  return out;
}

template <typename Real>
double anchor_loss(const ModelParams<Real>& params, std::span<const EntityIndex> entities,
                   const EnrichmentTable& anchors, AnchorDistance distance) {
  if (anchors.anchor_dim() != params.dim()) throw ShapeError("anchor dim != entity dim");
  double sum = 0;
  std::size_t n = 0;
  for (EntityIndex e : entities) {
    if (e >= anchors.size()) throw PreconditionError("entity without an anchor vector");
    auto d = anchor_distance<Real>(params.entities.row(e), anchors.anchor_vector(e), distance, 0.0, {});
    if (!d) continue;
    sum += *d;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void SparseGradient::RowPool::reset(std::size_t width) {
  if (width != width_) blocks_.clear();
  width_ = width;
  used_ = 0;
}

std::span<double> SparseGradient::RowPool::add() {
  const std::size_t block = used_ / kRowsPerBlock;
  if (block == blocks_.size()) blocks_.push_back(std::make_unique<double[]>(kRowsPerBlock * width_));
  auto row = at(used_++);
  std::fill(row.begin(), row.end(), 0.0);
  return row;
}

std::span<double> SparseGradient::RowPool::at(std::size_t slot) {
  return {blocks_[slot / kRowsPerBlock].get() + (slot % kRowsPerBlock) * width_, width_};
}

std::span<const double> SparseGradient::RowPool::at(std::size_t slot) const {
  return {blocks_[slot / kRowsPerBlock].get() + (slot % kRowsPerBlock) * width_, width_};
}

void SparseGradient::reset(std::size_t entity_width, std::size_t relation_width) {
  ew_ = entity_width;
  rw_ = relation_width;
  entity_rows_.clear();
  relation_rows_.clear();
  entity_slot_.clear();
  relation_slot_.clear();
  entity_values_.reset(entity_width);
  relation_values_.reset(relation_width);
}

std::span<double> SparseGradient::entity(EntityIndex row) {
  auto [it, inserted] = entity_slot_.try_emplace(row, entity_rows_.size());
  if (inserted) {
    entity_rows_.push_back(row);
    return entity_values_.add();
  }
  return entity_values_.at(it->second);
}

std::span<double> SparseGradient::relation(RelationIndex row) {
  auto [it, inserted] = relation_slot_.try_emplace(row, relation_rows_.size());
  if (inserted) {
    relation_rows_.push_back(row);
    return relation_values_.add();
  }
  return relation_values_.at(it->second);
}

std::span<const double> SparseGradient::entity_grad(std::size_t slot) const { return entity_values_.at(slot); }

std::span<const double> SparseGradient::relation_grad(std::size_t slot) const { return relation_values_.at(slot); }

template <typename Real>
LossBreakdown compute_loss(const ModelParams<Real>& params, std::span<const Triple> positives,
                           const NegativeBatch& negatives, const EnrichmentTable* anchors,
                           const TrainConfig& config, SparseGradient* gradient) {
  if (positives.empty()) throw PreconditionError("empty batch");
  if (negatives.triples.size() != positives.size() * negatives.neg_per_pos || negatives.neg_per_pos == 0) {
    throw PreconditionError("negative batch does not match positives");
  }
  if (gradient) gradient->reset(params.entities.cols(), params.relations.cols());
  const double gamma = params.gamma;
  const double batch = static_cast<double>(positives.size());
  const double nneg = static_cast<double>(negatives.neg_per_pos);

  LossBreakdown out;
  // Link term.
  double link = 0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const Triple& p = positives[i];
    double f_pos;
    if (gradient) {
      // d/df softplus(f - gamma) = sigmoid(f - gamma)
      f_pos = accumulate_weighted_gradient(
          params, p, [&](double f) { return config.zeta2 * sigmoid(f - gamma) / batch; },
          gradient->entity(p.head), gradient->relation(p.relation), gradient->entity(p.tail));
    } else {
      f_pos = score(params, p);
    }
    double neg = 0;
    for (const Triple& n : negatives.for_positive(i)) {
      double f_neg;
      if (gradient) {
        f_neg = accumulate_weighted_gradient(
            params, n, [&](double f) { return -config.zeta2 * sigmoid(gamma - f) / (nneg * batch); },
            gradient->entity(n.head), gradient->relation(n.relation), gradient->entity(n.tail));
      } else {
        f_neg = score(params, n);
      }
      neg += softplus(gamma - f_neg);
    }
    link += softplus(f_pos - gamma) + neg / nneg;
  }
  out.link_loss = link / batch;

  // Anchor term.
  if (config.zeta1 != 0.0) {
    if (anchors == nullptr) throw PreconditionError("zeta1 > 0 requires anchor vectors");
    if (anchors->anchor_dim() != params.dim()) throw ShapeError("anchor dim != entity dim");
    const auto ents = batch_entities(positives);
    double sum = 0;
    std::size_t n = 0;
    for (EntityIndex e : ents) {
      auto d = anchor_distance<Real>(params.entities.row(e), anchors->anchor_vector(e),
                                     config.anchor_distance, 0.0, {});
      if (!d) continue;
      sum += *d;
      ++n;
    }
    if (n < ents.size() && !g_cosine_warned.exchange(true)) {
      spdlog::warn("cosine anchor distance: excluded {} zero-norm entit(y/ies) from the mean", ents.size() - n);
    }
    if (n > 0) {
      out.anchor_loss = sum / static_cast<double>(n);
      if (gradient) {
        const double w = config.zeta1 / static_cast<double>(n);
        for (EntityIndex e : ents) {
          anchor_distance<Real>(params.entities.row(e), anchors->anchor_vector(e), config.anchor_distance,
                                w, gradient->entity(e));
        }
      }
    }
  }
  out.total = config.zeta1 * out.anchor_loss + config.zeta2 * out.link_loss;
  return out;
}

template <typename Real>
LossBreakdown train_step(ModelParams<Real>& params, std::span<const Triple> positives,
                         const NegativeBatch& negatives, const EnrichmentTable* anchors,
                         const TrainConfig& config, OptimizerState& state, std::size_t batch_index) {
  thread_local SparseGradient grad;
  const auto loss = compute_loss(params, positives, negatives, anchors, config, &grad);
  auto finite = [](std::span<const double> g) {
    return std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
  };
  bool ok = std::isfinite(loss.total) && std::isfinite(loss.link_loss) && std::isfinite(loss.anchor_loss);
  for (std::size_t s = 0; ok && s < grad.entity_rows().size(); ++s) ok = finite(grad.entity_grad(s));
  for (std::size_t s = 0; ok && s < grad.relation_rows().size(); ++s) ok = finite(grad.relation_grad(s));
  if (!ok) {
    throw DivergenceError(batch_index, fmt::format("non-finite loss or gradient at batch {}", batch_index));
  }

  const double lr = config.learning_rate;
  const bool adagrad = config.optimizer == OptimizerKind::kAdagrad;
  const bool rotate = params.model.kind == ModelKind::kRotatE;
  auto apply = [&](std::span<Real> row, std::span<const double> g, double& accum, bool wrap) {
    double step = lr;
    if (adagrad) {
      double sq = 0;
      for (double v : g) sq += v * v;
      accum += sq / static_cast<double>(g.size());
      step = lr / (std::sqrt(accum) + config.adagrad_epsilon);
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      double v = double(row[i]) - step * g[i];
      if (wrap) v = wrap_phase(v);
      row[i] = static_cast<Real>(v);
    }
  };
  for (std::size_t s = 0; s < grad.entity_rows().size(); ++s) {
    const auto r = grad.entity_rows()[s];
    apply(params.entities.row(r), grad.entity_grad(s), state.entity_sum[r], false);
  }
  for (std::size_t s = 0; s < grad.relation_rows().size(); ++s) {
    const auto r = grad.relation_rows()[s];
    apply(params.relations.row(r), grad.relation_grad(s), state.relation_sum[r], rotate);
  }
  return loss;
}

#define ANCHORED_KGE_INSTANTIATE(Real)                                                                   \
  template double link_loss<Real>(const ModelParams<Real>&, const Triple&, std::span<const Triple>);     \
  template double anchor_loss<Real>(const ModelParams<Real>&, std::span<const EntityIndex>,              \
                                    const EnrichmentTable&, AnchorDistance);                             \
  template LossBreakdown compute_loss<Real>(const ModelParams<Real>&, std::span<const Triple>,           \
                                            const NegativeBatch&, const EnrichmentTable*,                \
                                            const TrainConfig&, SparseGradient*);                        \
  template LossBreakdown train_step<Real>(ModelParams<Real>&, std::span<const Triple>,                   \
                                          const NegativeBatch&, const EnrichmentTable*,                  \
                                          const TrainConfig&, OptimizerState&, std::size_t);

ANCHORED_KGE_INSTANTIATE(float)
ANCHORED_KGE_INSTANTIATE(double)
#undef ANCHORED_KGE_INSTANTIATE

// ---------------------------------------------------------------- loop

namespace {

// Seeded epoch-wise shuffler yielding consecutive batches.
class BatchStream {
 public:
  BatchStream(std::span<const Triple> data, std::size_t batch_size, std::uint64_t seed)
      : data_(data), order_(data.size()), batch_(std::min(batch_size, data.size())), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::span<const Triple> next() {
    if (cursor_ + batch_ > order_.size()) reshuffle();
    buffer_.clear();
    for (std::size_t i = 0; i < batch_; ++i) buffer_.push_back(data_[order_[cursor_ + i]]);
    cursor_ += batch_;
    return buffer_;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  std::span<const Triple> data_;
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
  std::vector<Triple> buffer_;
};

}  // namespace

TrainResult train(const TripleSet& dataset, const EnrichmentTable* anchors, const TrainConfig& config_in,
                  const TrainOptions& options) {
  config_in.validate();
  if (dataset.empty()) throw PreconditionError("cannot train on an empty triple set");
  TrainConfig config = config_in;
  if (anchors == nullptr) config.zeta1 = 0.0;

  const auto spec = parse_model(config.model);
  const auto num_entities = dataset.entities().size();
  InitOptions init{derive_seed(config.seed, {0}), nullptr};
  if (anchors != nullptr && config.init == InitKind::kText) init.anchors = anchors;
  if (anchors != nullptr && anchors->anchor_dim() != config.dim) {
    throw ShapeError(fmt::format("anchor dim {} != configured dim {}", anchors->anchor_dim(), config.dim));
  }

  TrainResult result;
  result.params = init_params<float>(num_entities, dataset.relations().size(), config.dim, spec,
                                     config.gamma, init);
  OptimizerState state = OptimizerState::for_params(num_entities, dataset.relations().size());
  const TripleSet* known = config.filter_negatives ? (options.known ? options.known : &dataset) : nullptr;
  const auto chash = config_hash(config);
  const auto started = std::chrono::steady_clock::now();
  std::optional<std::filesystem::path> last_checkpoint;

  auto emit_log = [&](std::uint64_t step, const LossBreakdown& l) {
    LogRow row{step, l.link_loss, l.anchor_loss, l.total,
               std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                   .count()};
    result.log.push_back(row);
    if (options.on_log) options.on_log(row);
  };

  auto checkpoint = [&](std::uint64_t step) {
    if (!options.checkpoint_dir) return;
    save_checkpoint(*options.checkpoint_dir, result.params, dataset.vocabs(), step, chash);
    last_checkpoint = *options.checkpoint_dir;
  };

  if (config.threads <= 1) {
    BatchStream batches(dataset.triples(), config.batch_size, derive_seed(config.seed, {1}));
    std::mt19937_64 neg_rng(derive_seed(config.seed, {2}));
    for (std::uint64_t step = 1; step <= config.steps; ++step) {
      const auto batch = batches.next();
      const auto negs = sample_negatives(batch, num_entities, config.neg_per_pos, config.corruption_side,
                                         neg_rng, known);
      LossBreakdown loss;
      try {
        loss = train_step(result.params, batch, negs, anchors, config, state, step - 1);
      } catch (const DivergenceError& e) {
        throw DivergenceError(e.batch_index(),
                              fmt::format("{}; last good checkpoint: {}", e.what(),
                                          last_checkpoint ? last_checkpoint->string() : "<none>"));
      }
      if (step % config.log_interval == 0 || step == config.steps) emit_log(step, loss);
      if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 && step != config.steps) {
        checkpoint(step);
      }
    }
  } else {
    // Lock-free workers over shared tables: updates to rows touched by two
    // workers at once may interleave. Not deterministic.
    std::atomic<std::uint64_t> next_step{1};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu, log_mu;
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < config.threads; ++w) {
      workers.emplace_back([&, w] {
        BatchStream batches(dataset.triples(), config.batch_size, derive_seed(config.seed, {1, w}));
        std::mt19937_64 neg_rng(derive_seed(config.seed, {2, w}));
        for (std::uint64_t step = next_step++; step <= config.steps && !failed; step = next_step++) {
          try {
            const auto batch = batches.next();
            const auto negs = sample_negatives(batch, num_entities, config.neg_per_pos,
                                               config.corruption_side, neg_rng, known);
            const auto loss = train_step(result.params, batch, negs, anchors, config, state, step - 1);
            if (step % config.log_interval == 0 || step == config.steps) {
              std::lock_guard lock(log_mu);
              emit_log(step, loss);
            }
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
    }
    workers.clear();
    if (error) std::rethrow_exception(error);
    std::sort(result.log.begin(), result.log.end(),
              [](const LogRow& a, const LogRow& b) { return a.step < b.step; });
  }
  result.steps_done = config.steps;
  checkpoint(config.steps);
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const LogRow> rows) {
  write_atomically(path, [&](std::ostream& out) {
    out << "step,link_loss,anchor_loss,total_loss,wallclock_ms\n";
    for (const auto& r : rows) {
      out << fmt::format("{},{},{},{},{}\n", r.step, r.link_loss, r.anchor_loss, r.total_loss, r.wallclock_ms);
    }
  });
}

}  // namespace anchored_kge
