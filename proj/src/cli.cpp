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

#include "anchored_kge/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "anchored_kge/enrich.hpp"
#include "anchored_kge/error.hpp"
#include "anchored_kge/eval.hpp"
#include "anchored_kge/kg_store.hpp"
#include "anchored_kge/kge_core.hpp"
#include "anchored_kge/perturb.hpp"
#include "anchored_kge/train.hpp"
#include "anchored_kge/util.hpp"
#include "anchored_kge/vector_io.hpp"

namespace anchored_kge {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- manifest

RunManifest::RunManifest(std::string command, std::vector<std::string> args) {
  body_["command"] = std::move(command);
  body_["args"] = std::move(args);
  body_["toolkit_version"] = kToolkitVersion;
  body_["started_at"] = rfc3339_now();
  body_["seeds"] = nlohmann::json::object();
  body_["inputs"] = nlohmann::json::object();
  body_["outputs"] = nlohmann::json::object();
}

RunManifest::~RunManifest() {
  try {
    finish(kExitInternal, "aborted");
  } catch (...) {
  }
}

void RunManifest::add_input(const fs::path& path) {
  if (fs::is_regular_file(path)) body_["inputs"][path.string()] = sha256_file(path);
}

void RunManifest::add_output(const fs::path& path) {
  if (fs::is_regular_file(path)) body_["outputs"][path.string()] = sha256_file(path);
}

void RunManifest::finish(int exit_code, const std::string& status) {
  if (written_) return;
  written_ = true;
  body_["exit_code"] = exit_code;
  body_["status"] = status;
  body_["finished_at"] = rfc3339_now();
  if (!path_) return;
  write_atomically(*path_, [&](std::ostream& o) { o << body_.dump(2) << '\n'; });
}

namespace {

const std::vector<std::string> kDefaultTreatmentRelations = {
    "Hetionet::CtD::Compound:Disease",
    "GNBR::T::Compound:Disease",
    "DRUGBANK::treats::Compound:Disease",
};

class UsageError : public Error {
 public:
  using Error::Error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Vocabs vocab_from_files(const std::vector<fs::path>& files) {
  Vocabs v;
  for (const auto& f : files) {
    auto set = load_triples(f, Split::kAll, VocabMode::kBuild, v.entities ? &v : nullptr);
    v = set.vocabs();
  }
  if (!v.entities) v = TripleSet().vocabs();
  return v;
}

std::vector<RelationIndex> relation_indices(const Vocabulary& rels, const std::vector<std::string>& labels) {
  std::vector<RelationIndex> out;
  for (const auto& l : labels) out.push_back(rels.at(l));
  return out;
}

std::string read_api_key() {
  const char* key = std::getenv(kApiKeyEnv);
  return key ? std::string(key) : std::string();
}

class OfflineChat final : public ChatEndpoint {
 public:
  std::string complete(const std::string&, const std::string& prompt, double) override {
    throw RequestError(0, fmt::format("offline: no cached description for prompt '{}'", prompt.substr(0, 60)));
  }
};

class OfflineEmbedding final : public EmbeddingEndpoint {
 public:
  TextVector embed(const std::string&, const std::string&) override {
    throw RequestError(0, "offline: text not in the embedding cache");
  }
};

struct EndpointFlags {
  std::string endpoint;
  bool offline = false;
  int retries = 3;
  int backoff_ms = 500;
  std::size_t concurrency = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--endpoint", endpoint, "Base URL of the chat/embedding API (e.g. https://api.openai.com/v1)");
    cmd->add_flag("--offline", offline, "Use only the warm cache; never contact the endpoint");
    cmd->add_option("--retries", retries, "Retry budget per request")->capture_default_str();
    cmd->add_option("--backoff-ms", backoff_ms, "Initial retry backoff")->capture_default_str();
    cmd->add_option("--concurrency", concurrency, "Concurrent requests")->capture_default_str();
  }

  HttpOptions http() const {
    HttpOptions o;
    o.base_url = endpoint;
    o.api_key = read_api_key();
    o.retry.max_retries = retries;
    o.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
    return o;
  }

  // Validates credentials and URL before any output is produced.
  void check() const {
    if (offline) return;
    if (endpoint.empty()) throw UsageError("--endpoint is required unless --offline is given");
    if (read_api_key().empty()) {
      throw UsageError(fmt::format("missing API credential: export {}=<key> (or pass --offline with a warm cache)",
                                   kApiKeyEnv));
    }
    try {
      JsonHttpClient probe(http());
    } catch (const RequestError& e) {
      throw UsageError(fmt::format("bad --endpoint: {}", e.what()));
    }
  }
};

struct ProtocolFlags {
  std::string relations;
  std::string pool_type = "Disease";
  std::size_t num_negatives = 50;
  std::size_t trials = 5;
  std::string mode = "sampled";
  bool include_true = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--relations", relations, "Comma-separated evaluation relations (default: three treatment relations)");
    cmd->add_option("--pool-type", pool_type, "Entity type of the candidate tails")->capture_default_str();
    cmd->add_option("--num-negatives", num_negatives, "Sampled candidates per test triple")->capture_default_str();
    cmd->add_option("--trials", trials, "Repeated sampling trials")->capture_default_str();
    cmd->add_option("--mode", mode, "sampled | filtered-full")->capture_default_str();
    cmd->add_flag("--include-true", include_true, "Count the true tail among the num-negatives candidates");
  }

  EvalProtocol build(const Vocabs& vocabs, std::uint64_t seed, std::size_t threads, const TripleSet* known) const {
    EvalProtocol p;
    const auto types = build_type_index(*vocabs.entities);
    p.candidate_pool = types.pool(pool_type);
    const auto labels = relations.empty() ? kDefaultTreatmentRelations : split_list(relations);
    p.relations = relation_indices(*vocabs.relations, labels);
    p.num_negatives = num_negatives;
    p.trials = trials;
    p.seed = seed;
    p.threads = threads;
    p.include_true_in_pool = include_true;
    if (mode == "sampled") p.mode = EvalMode::kSampled;
    else if (mode == "filtered-full") p.mode = EvalMode::kFilteredFull;
    else throw UsageError("--mode must be sampled or filtered-full");
    p.known = known;
    p.validate();
    return p;
  }
};

struct TrainFlags {
  std::string config;
  std::string model;
  std::string enrichment;
  bool no_anchor = false;
  std::string projection = "prefix";

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "Training config (key = value)");
    cmd->add_option("--model", model, "TransE_l1 | TransE_l2 | DistMult | RotatE (overrides config)");
    cmd->add_option("--enrichment", enrichment, "Enrichment vector file from `enrich`");
    cmd->add_flag("--no-anchor", no_anchor, "Structure-only baseline: random init, zeta1 = 0");
    cmd->add_option("--anchor-projection", projection, "prefix | random")->capture_default_str();
  }

  TrainConfig build(std::uint64_t seed, std::size_t threads) const {
    TrainConfig c;
    if (!config.empty()) c = load_config(config);
    if (!model.empty()) c.model = model;
    c.seed = seed;
    c.threads = threads;
    if (no_anchor) {
      c.zeta1 = 0.0;
      c.init = InitKind::kRandom;
    }
    c.validate();
    return c;
  }

  std::optional<EnrichmentTable> anchors(const Vocabulary& entities, const TrainConfig& c, std::uint64_t seed) const {
    if (no_anchor) {
      if (!enrichment.empty()) throw UsageError("--no-anchor and --enrichment are mutually exclusive");
      return std::nullopt;
    }
    if (enrichment.empty()) throw UsageError("pass --enrichment <file> or --no-anchor");
    AnchorProjection proj;
    if (projection == "prefix") proj = AnchorProjection::kPrefix;
    else if (projection == "random") proj = AnchorProjection::kRandomProjection;
    else throw UsageError("--anchor-projection must be prefix or random");
    return import_enrichment(enrichment, entities, c.dim, proj, derive_seed(seed, {7}));
  }
};

void require_seed(const std::optional<std::uint64_t>& seed) {
  if (!seed) throw UsageError("--seed is required for randomized commands");
}

// ---------------------------------------------------------------- enrich

struct EnrichArgs {
  std::vector<std::string> triples;
  std::string chat_model = "gpt-4o-mini";
  std::string embed_model = "text-embedding-3-small";
  std::string prompt = "expert";
  double temperature = kDefaultTemperature;
  std::string cache;
  std::string out;
  std::string names;
  std::size_t max_input_bytes = 24000;
  EndpointFlags endpoint;
};

int cmd_enrich(const EnrichArgs& a, RunManifest& m, std::ostream& out, std::ostream& err) {
  const fs::path out_path = a.out;
  m.set_path(fs::path(a.out + ".manifest.json"));
  a.endpoint.check();
  const auto variant = parse_prompt_variant(a.prompt);
  std::vector<fs::path> files(a.triples.begin(), a.triples.end());
  for (const auto& f : files) m.add_input(f);
  const auto vocabs = vocab_from_files(files);

  fs::create_directories(a.cache);
  DescriptionCache descriptions(fs::path(a.cache) / "descriptions.jsonl");
  EmbeddingCache embeddings(fs::path(a.cache) / "embeddings.jsonl");

  EnrichOptions opts;
  opts.fetch = {a.chat_model, variant, a.temperature};
  opts.embed = {a.embed_model, a.max_input_bytes};
  opts.max_concurrency = a.endpoint.concurrency;
  if (!a.names.empty()) {
    opts.names = read_names(a.names);
    m.add_input(a.names);
  }

  std::unique_ptr<ChatEndpoint> chat;
  std::unique_ptr<EmbeddingEndpoint> embed;
  if (a.endpoint.offline) {
    chat = std::make_unique<OfflineChat>();
    embed = std::make_unique<OfflineEmbedding>();
  } else {
    chat = std::make_unique<HttpChatEndpoint>(a.endpoint.http());
    embed = std::make_unique<HttpEmbeddingEndpoint>(a.endpoint.http());
  }
  const auto result = run_enrichment(*vocabs.entities, opts, *chat, *embed, descriptions, embeddings);
  const std::size_t total = vocabs.entities->size();
  out << fmt::format("enriched {} / {} entities\n", total - result.failures.size(), total);
  m.set("coverage", {{"enriched", total - result.failures.size()}, {"total", total}});
  m.set("prompt", {{"variant", a.prompt}, {"temperature", a.temperature}, {"chat_model", a.chat_model},
                   {"embed_model", a.embed_model}});
  if (!result.complete()) {
    const fs::path failures = a.out + ".failures.tsv";
    write_atomically(failures, [&](std::ostream& o) {
      for (const auto& [label, why] : result.failures) o << label << '\t' << why << '\n';
    });
    err << fmt::format("{} entities failed; see {}\n", result.failures.size(), failures.string());
    m.add_output(failures);
    return kExitInternal;
  }
  const auto table = EnrichmentTable::from_parts(result.labels, result.names, result.descriptions,
                                                 std::max<std::size_t>(1, result.names.cols() * 2));
  export_enrichment(table, out_path);
  m.add_output(out_path);
  m.add_output(sidecar_path(out_path));
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string triples;
  std::vector<std::string> extra;
  std::string checkpoint_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  TrainFlags train;
};

int cmd_train(const TrainArgs& a, RunManifest& m, std::ostream& out, std::ostream& err) {
  const fs::path dir = a.checkpoint_dir;
  m.set_path(dir / "manifest.json");
  require_seed(a.seed);
  const auto config = a.train.build(*a.seed, a.threads);
  std::vector<fs::path> files{a.triples};
  files.insert(files.end(), a.extra.begin(), a.extra.end());
  for (const auto& f : files) m.add_input(f);
  const auto vocabs = vocab_from_files(files);
  const auto train_set = load_triples(a.triples, Split::kTrain, VocabMode::kReuse, &vocabs);
  const auto anchors = a.train.anchors(*vocabs.entities, config, *a.seed);
  if (anchors) m.add_input(a.train.enrichment);

  const auto effective = anchors ? config : [&] {
    auto c = config;
    c.zeta1 = 0;
    c.init = InitKind::kRandom;
    return c;
  }();
  m.set_config_hash(config_hash(effective));
  m.add_seed("train", *a.seed);
  m.set("anchoring", {{"anchored", anchors.has_value()},
                      {"zeta1", effective.zeta1},
                      {"init", anchors ? std::string(to_string(effective.init)) : "random"},
                      {"anchor_distance", to_string(effective.anchor_distance)},
                      {"enrichment", anchors ? a.train.enrichment : ""}});
  m.set("config", to_config_text(effective));

  TrainOptions opts;
  opts.checkpoint_dir = dir;
  TrainResult result;
  try {
    result = train(train_set, anchors ? &*anchors : nullptr, effective, opts);
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    m.finish(kExitDivergence, std::string("diverged: ") + e.what());
    return kExitDivergence;
  }
  write_training_log(dir / "training_log.csv", result.log);
  for (const char* f : {"entities.kgev", "relations.kgev", "meta.json", "training_log.csv"}) m.add_output(dir / f);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    out << fmt::format("step {} link_loss {:.6f} anchor_loss {:.6f} total {:.6f}\n", last.step, last.link_loss,
                       last.anchor_loss, last.total_loss);
  }
  out << "checkpoint written to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string test;
  std::vector<std::string> known;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  ProtocolFlags protocol;
};

int cmd_eval(const EvalArgs& a, RunManifest& m, std::ostream& out, std::ostream&) {
  m.set_path(fs::path(a.out + ".manifest.json"));
  require_seed(a.seed);
  const auto ck = load_checkpoint(a.checkpoint);
  for (const char* f : {"entities.kgev", "relations.kgev", "meta.json"}) m.add_input(fs::path(a.checkpoint) / f);
  m.add_input(a.test);
  const auto test = load_triples(a.test, Split::kTest, VocabMode::kReuse, &ck.vocabs);
  std::optional<TripleSet> known;
  if (!a.known.empty()) {
    std::vector<Triple> all(test.triples().begin(), test.triples().end());
    for (const auto& k : a.known) {
      m.add_input(k);
      const auto s = load_triples(k, Split::kAll, VocabMode::kReuse, &ck.vocabs);
      all.insert(all.end(), s.triples().begin(), s.triples().end());
    }
    known = TripleSet(std::move(all), Split::kAll, ck.vocabs);
  }
  const auto protocol = a.protocol.build(ck.vocabs, *a.seed, a.threads, known ? &*known : &test);
  m.add_seed("eval", *a.seed);
  m.set("protocol", protocol.to_json());
  const auto report = evaluate(ck.params, test, protocol);
  const fs::path csv = a.out + ".csv", json = a.out + ".json";
  write_atomically(csv, [&](std::ostream& o) { o << emit_report(report, ReportFormat::kCsv); });
  write_atomically(json, [&](std::ostream& o) { o << emit_report(report, ReportFormat::kJson); });
  m.add_output(csv);
  m.add_output(json);
  const std::pair<std::string, MetricsReport> row{to_string(ck.meta.model), report};
  out << emit_table(std::span(&row, 1));
  return kExitOk;
}

// ---------------------------------------------------------------- robust

struct RobustArgs {
  std::string train_file, valid_file, test_file;
  std::string grid;
  std::string out;
  std::string provenance;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  TrainFlags train;
  ProtocolFlags protocol;
};

int cmd_robust(const RobustArgs& a, RunManifest& m, std::ostream& out, std::ostream&) {
  m.set_path(fs::path(a.out + ".manifest.json"));
  require_seed(a.seed);
  const auto config = a.train.build(*a.seed, a.threads);
  std::vector<fs::path> files{a.train_file};
  if (!a.valid_file.empty()) files.emplace_back(a.valid_file);
  files.emplace_back(a.test_file);
  for (const auto& f : files) m.add_input(f);
  const auto vocabs = vocab_from_files(files);
  const auto train_set = load_triples(a.train_file, Split::kTrain, VocabMode::kReuse, &vocabs);
  const auto test_set = load_triples(a.test_file, Split::kTest, VocabMode::kReuse, &vocabs);
  const auto anchors = a.train.anchors(*vocabs.entities, config, *a.seed);
  const auto protocol = a.protocol.build(vocabs, *a.seed, a.threads, &test_set);
  const auto grid = a.grid.empty() ? default_grid(*a.seed) : parse_grid(a.grid, *a.seed);
  m.set_config_hash(config_hash(config));
  m.add_seed("suite", *a.seed);

  const auto cells = robustness_suite(train_set, test_set, anchors ? &*anchors : nullptr, config, protocol, grid,
                                      [&](const RobustnessCell& c) {
                                        out << fmt::format("{}:{} -> {}\n", c.spec ? to_string(c.spec->kind) : "none",
                                                           c.spec ? c.spec->ratio : 0.0, c.status);
                                      });
  const fs::path csv = a.out;
  write_atomically(csv, [&](std::ostream& o) { o << robustness_csv(cells); });
  nlohmann::json prov = {{"config", to_config_text(config)},
                         {"config_hash", config_hash(config)},
                         {"protocol", protocol.to_json()},
                         {"anchored", anchors.has_value()},
                         {"cells", nlohmann::json::array()}};
  for (const auto& c : cells) {
    prov["cells"].push_back({{"kind", c.spec ? std::string(to_string(c.spec->kind)) : "none"},
                             {"ratio", c.spec ? c.spec->ratio : 0.0},
                             {"perturb_seed", c.spec ? c.spec->seed : 0},
                             {"train_size", c.train_size},
                             {"status", c.status},
                             {"report", c.report ? report_to_json(*c.report) : nlohmann::json()}});
  }
  const fs::path prov_path = a.provenance.empty() ? fs::path(a.out + ".json") : fs::path(a.provenance);
  write_atomically(prov_path, [&](std::ostream& o) { o << prov.dump(2) << '\n'; });
  m.add_output(csv);
  m.add_output(prov_path);
  const bool any_failed = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return !c.report; });
  return any_failed ? kExitInternal : kExitOk;
}

// ---------------------------------------------------------------- mask-ablate

struct MaskArgs {
  std::string cache;
  std::string ratios = "0,0.2,0.4,0.6";
  std::string train_file, valid_file, test_file;
  std::string chat_model = "gpt-4o-mini";
  std::string embed_model = "text-embedding-3-small";
  std::string prompt = "expert";
  double temperature = kDefaultTemperature;
  std::string names;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::size_t max_input_bytes = 24000;
  EndpointFlags endpoint;
  TrainFlags train;
  ProtocolFlags protocol;
};

int cmd_mask_ablate(const MaskArgs& a, RunManifest& m, std::ostream& out, std::ostream&) {
  m.set_path(fs::path(a.out + ".manifest.json"));
  require_seed(a.seed);
  if (a.train.no_anchor || !a.train.enrichment.empty()) {
    throw UsageError("mask-ablate builds its own anchors; drop --no-anchor/--enrichment");
  }
  a.endpoint.check();
  const auto config = a.train.build(*a.seed, a.threads);
  std::vector<fs::path> files{a.train_file};
  if (!a.valid_file.empty()) files.emplace_back(a.valid_file);
  files.emplace_back(a.test_file);
  for (const auto& f : files) m.add_input(f);
  const auto vocabs = vocab_from_files(files);
  const auto train_set = load_triples(a.train_file, Split::kTrain, VocabMode::kReuse, &vocabs);
  const auto test_set = load_triples(a.test_file, Split::kTest, VocabMode::kReuse, &vocabs);
  const auto protocol = a.protocol.build(vocabs, *a.seed, a.threads, &test_set);
  const auto variant = parse_prompt_variant(a.prompt);
  std::map<std::string, std::string, std::less<>> names;
  if (!a.names.empty()) names = read_names(a.names);

  DescriptionCache descriptions(fs::path(a.cache) / "descriptions.jsonl");
  EmbeddingCache embeddings(fs::path(a.cache) / "embeddings.jsonl");
  m.add_input(fs::path(a.cache) / "descriptions.jsonl");
  std::vector<DescriptionRecord> records;
  for (const auto& label : vocabs.entities->labels()) {
    auto r = descriptions.find(label, variant, a.temperature, a.chat_model);
    if (!r) throw UsageError(fmt::format("no cached description for '{}' ({} @ {}, {})", label, a.prompt,
                                         a.temperature, a.chat_model));
    records.push_back(std::move(*r));
  }

  std::unique_ptr<EmbeddingEndpoint> embed;
  if (a.endpoint.offline) embed = std::make_unique<OfflineEmbedding>();
  else embed = std::make_unique<HttpEmbeddingEndpoint>(a.endpoint.http());
  const EmbedOptions eopts{a.embed_model, a.max_input_bytes};

  m.set_config_hash(config_hash(config));
  m.add_seed("mask", *a.seed);
  std::string csv = "ratio,mr,mrr,h1,h3,h10,auc,masked_tokens,total_tokens\n";
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& rs : split_list(a.ratios)) {
    const double ratio = std::stod(rs);
    const auto masked = mask_descriptions(records, ratio, *a.seed);
    std::size_t n_masked = 0, n_tokens = 0;
    const std::size_t n = masked.size();
    Matrix<float> name_m, desc_m;
    for (std::size_t i = 0; i < n; ++i) {
      n_masked += count_masks(masked[i].text);
      n_tokens += count_tokens(masked[i].text);
      auto it = names.find(masked[i].entity_label);
      const std::string& name = it == names.end() ? masked[i].entity_label : it->second;
      const auto nv = embed_text(*embed, name, eopts, embeddings);
      const auto dv = embed_text(*embed, masked[i].text, eopts, embeddings);
      if (i == 0) {
        name_m = Matrix<float>(n, nv.size());
        desc_m = Matrix<float>(n, dv.size());
      }
      if (nv.size() != name_m.cols() || dv.size() != desc_m.cols()) throw ConsistencyError("embedding dims differ");
      std::copy(nv.begin(), nv.end(), name_m.row(i).begin());
      std::copy(dv.begin(), dv.end(), desc_m.row(i).begin());
    }
    const auto table = EnrichmentTable::from_parts(vocabs.entities->labels(), name_m, desc_m, config.dim);
    const auto trained = train(train_set, &table, config);
    const auto report = evaluate(trained.params, test_set, protocol);
    const auto& mm = report.mean;
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", ratio, format_full(mm.mr), format_full(mm.mrr),
                       format_full(mm.hits.at(1)), format_full(mm.hits.at(3)), format_full(mm.hits.at(10)),
                       format_full(mm.auc), n_masked, n_tokens);
    rows.emplace_back(fmt::format("mask {:.0f}%", ratio * 100), report);
  }
  write_atomically(a.out, [&](std::ostream& o) { o << csv; });
  m.add_output(a.out);
  out << emit_table(rows);
  return kExitOk;
}

// ---------------------------------------------------------------- repurpose

struct RepurposeArgs {
  std::string checkpoint;
  std::string entity;
  std::size_t top_k = 10;
  std::string relations;
  std::string drug_type = "Compound";
  std::string disease_type = "Disease";
  std::string out;
};

int cmd_repurpose(const RepurposeArgs& a, RunManifest& m, std::ostream& out, std::ostream&) {
  if (!a.out.empty()) m.set_path(fs::path(a.out + ".manifest.json"));
  const auto ck = load_checkpoint(a.checkpoint);
  const auto& ents = *ck.vocabs.entities;
  const auto query = ents.at(a.entity);
  const auto type = entity_type(a.entity);
  const auto types = build_type_index(ents);
  bool query_is_head;
  std::string candidate_type;
  if (type == a.disease_type) {
    query_is_head = false;
    candidate_type = a.drug_type;
  } else if (type == a.drug_type) {
    query_is_head = true;
    candidate_type = a.disease_type;
  } else {
    throw TypedLabelError(fmt::format("'{}' has type '{}'; query must be one of: {}, {}", a.entity, type,
                                      a.drug_type, a.disease_type));
  }
  const auto labels = a.relations.empty() ? kDefaultTreatmentRelations : split_list(a.relations);
  const auto rels = relation_indices(*ck.vocabs.relations, labels);
  const auto ranked = rank_candidates(ck.params, query, query_is_head, rels, types.pool(candidate_type), a.top_k);
  std::string table = "rank,entity,score,relation\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    table += fmt::format("{},{},{},{}\n", i + 1, ents.label(ranked[i].entity), format_full(ranked[i].score),
                         ck.vocabs.relations->label(ranked[i].best_relation));
  }
  out << table;
  if (!a.out.empty()) {
    write_atomically(a.out, [&](std::ostream& o) { o << table; });
    m.add_output(a.out);
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- dispatch

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-graph embeddings anchored on LLM-derived entity descriptions", "anchored-kge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  EnrichArgs enrich_a;
  auto* enrich = app.add_subcommand("enrich", "Fetch descriptions and text embeddings for every entity");
  enrich->add_option("--triples", enrich_a.triples, "Triple files defining the entity vocabulary, in order")
      ->required();
  enrich->add_option("--chat-model", enrich_a.chat_model)->capture_default_str();
  enrich->add_option("--embed-model", enrich_a.embed_model)->capture_default_str();
  enrich->add_option("--prompt", enrich_a.prompt, "noprompt | expert | structured")->capture_default_str();
  enrich->add_option("--temperature", enrich_a.temperature)->capture_default_str();
  enrich->add_option("--cache", enrich_a.cache, "Cache directory")->required();
  enrich->add_option("--out", enrich_a.out, "Output KGEV vector file")->required();
  enrich->add_option("--names", enrich_a.names, "Optional TSV label<TAB>display name");
  enrich->add_option("--max-input-bytes", enrich_a.max_input_bytes)->capture_default_str();
  enrich_a.endpoint.add(enrich);

  TrainArgs train_a;
  auto* train_cmd = app.add_subcommand("train", "Train anchored (or baseline) embeddings");
  train_cmd->add_option("--triples", train_a.triples, "Training triples")->required();
  train_cmd->add_option("--extra-triples", train_a.extra, "Further files (valid/test) that extend the vocabulary");
  train_cmd->add_option("--checkpoint-dir", train_a.checkpoint_dir)->required();
  train_cmd->add_option("--seed", train_a.seed);
  train_cmd->add_option("--threads", train_a.threads)->capture_default_str();
  train_a.train.add(train_cmd);

  EvalArgs eval_a;
  auto* eval_cmd = app.add_subcommand("eval", "Tail-replacement ranking evaluation");
  eval_cmd->add_option("--checkpoint", eval_a.checkpoint)->required();
  eval_cmd->add_option("--test", eval_a.test)->required();
  eval_cmd->add_option("--known", eval_a.known, "Triples filtered out in filtered-full mode");
  eval_cmd->add_option("--out", eval_a.out, "Report path prefix (.csv/.json appended)")->required();
  eval_cmd->add_option("--seed", eval_a.seed);
  eval_cmd->add_option("--threads", eval_a.threads)->capture_default_str();
  eval_a.protocol.add(eval_cmd);

  RobustArgs robust_a;
  auto* robust = app.add_subcommand("robust", "Noise-robustness grid (delete/add fractions of training triples)");
  robust->add_option("--train", robust_a.train_file)->required();
  robust->add_option("--valid", robust_a.valid_file);
  robust->add_option("--test", robust_a.test_file)->required();
  robust->add_option("--grid", robust_a.grid, "e.g. delete:0.2,add:0.6 (default: {delete,add} x {0.2,0.4,0.6})");
  robust->add_option("--out", robust_a.out, "Output CSV matrix")->required();
  robust->add_option("--provenance", robust_a.provenance, "Provenance JSON (default <out>.json)");
  robust->add_option("--seed", robust_a.seed);
  robust->add_option("--threads", robust_a.threads)->capture_default_str();
  robust_a.train.add(robust);
  robust_a.protocol.add(robust);

  MaskArgs mask_a;
  auto* mask = app.add_subcommand("mask-ablate", "Mask description tokens, re-embed, retrain and evaluate");
  mask->add_option("--cache", mask_a.cache, "Cache directory written by enrich")->required();
  mask->add_option("--ratios", mask_a.ratios)->capture_default_str();
  mask->add_option("--train", mask_a.train_file)->required();
  mask->add_option("--valid", mask_a.valid_file);
  mask->add_option("--test", mask_a.test_file)->required();
  mask->add_option("--chat-model", mask_a.chat_model)->capture_default_str();
  mask->add_option("--embed-model", mask_a.embed_model)->capture_default_str();
  mask->add_option("--prompt", mask_a.prompt)->capture_default_str();
  mask->add_option("--temperature", mask_a.temperature)->capture_default_str();
  mask->add_option("--names", mask_a.names);
  mask->add_option("--max-input-bytes", mask_a.max_input_bytes)->capture_default_str();
  mask->add_option("--out", mask_a.out, "Output CSV table")->required();
  mask->add_option("--seed", mask_a.seed);
  mask->add_option("--threads", mask_a.threads)->capture_default_str();
  mask_a.endpoint.add(mask);
  mask->add_option("--config", mask_a.train.config);
  mask->add_option("--model", mask_a.train.model);
  mask_a.protocol.add(mask);

  RepurposeArgs rep_a;
  auto* rep = app.add_subcommand("repurpose", "Rank candidate compounds (or diseases) for one entity");
  rep->add_option("--checkpoint", rep_a.checkpoint)->required();
  rep->add_option("--entity", rep_a.entity)->required();
  rep->add_option("--top-k", rep_a.top_k)->capture_default_str();
  rep->add_option("--relations", rep_a.relations);
  rep->add_option("--drug-type", rep_a.drug_type)->capture_default_str();
  rep->add_option("--disease-type", rep_a.disease_type)->capture_default_str();
  rep->add_option("--out", rep_a.out, "Optional CSV output");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolkitVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << e.what() << '\n';
    if (e.get_exit_code() != 0) err << "see `anchored-kge " << (sub == &app ? "" : sub->get_name() + " ")
                                    << "--help`\n";
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  RunManifest manifest(chosen->get_name(), args);
  int code = kExitInternal;
  std::string status = "ok";
  try {
    if (chosen == enrich) code = cmd_enrich(enrich_a, manifest, out, err);
    else if (chosen == train_cmd) code = cmd_train(train_a, manifest, out, err);
    else if (chosen == eval_cmd) code = cmd_eval(eval_a, manifest, out, err);
    else if (chosen == robust) code = cmd_robust(robust_a, manifest, out, err);
    else if (chosen == mask) code = cmd_mask_ablate(mask_a, manifest, out, err);
    else code = cmd_repurpose(rep_a, manifest, out, err);
    if (code != kExitOk) status = "failed";
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitDivergence;
    status = std::string("diverged: ") + e.what();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    status = std::string("usage: ") + e.what();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    status = std::string("usage: ") + e.what();
  } catch (const VocabularyError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    status = std::string("usage: ") + e.what();
  } catch (const TypedLabelError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    status = std::string("usage: ") + e.what();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
    status = std::string("usage: ") + e.what();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInternal;
    status = std::string("error: ") + e.what();
  }
  try {
    manifest.finish(code, status);
  } catch (const std::exception& e) {
    err << "could not write run manifest: " << e.what() << '\n';
  }
  return code;
}

}  // namespace anchored_kge
