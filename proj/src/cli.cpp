#include "fcaccel/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "CLI11.hpp"
#include "fcaccel/error.hpp"

namespace fcaccel::cli {

namespace {

using clustering::Snapshot;

constexpr std::string_view kSnapshotStage = "snap";

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) fail(ErrorCode::kInvalidInput, std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      fail(ErrorCode::kInvalidInput, "unknown config key " + std::string(where) + "." + it.key());
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) into = it->get<T>();
}

void finish_snapshot(Snapshot& s) { s.snapshot_id = clustering::compute_snapshot_id(s, kSnapshotStage); }

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    require_keys(j,
                 {"paths", "vectorizer", "thresholds", "batch_size", "max_queries_per_cluster", "max_records_per_query",
                  "per_function_target", "min_cluster_records", "max_exemplars_per_cluster", "seed",
                  "holdout_fraction", "prompt", "token_mapping", "latency", "jitter_ms", "gateway"},
                 "config");
    if (auto p = j.find("paths"); p != j.end()) {
      require_keys(*p, {"corpus", "dictionaries", "snapshot_dir", "training_output"}, "paths");
      read(*p, "corpus", c.corpus);
      read(*p, "dictionaries", c.dictionaries);
      read(*p, "snapshot_dir", c.snapshot_dir);
      read(*p, "training_output", c.training_output);
    }
    if (auto v = j.find("vectorizer"); v != j.end()) {
      require_keys(*v, {"kind", "url", "name", "dimension", "timeout_ms"}, "vectorizer");
      read(*v, "kind", c.vectorizer.kind);
      read(*v, "url", c.vectorizer.url);
      read(*v, "name", c.vectorizer.name);
      read(*v, "dimension", c.vectorizer.dimension);
      read(*v, "timeout_ms", c.vectorizer.timeout_ms);
    }
    if (auto t = j.find("thresholds"); t != j.end()) {
      require_keys(*t, {"tau", "near_duplicate", "theta", "tau_match", "tau_centroid", "delta"}, "thresholds");
      for (auto it = t->begin(); it != t->end(); ++it) c.set_threshold(it.key(), it.value().get<double>());
    }
    read(j, "batch_size", c.clustering.batch_size);
    read(j, "max_queries_per_cluster", c.clustering.max_queries_per_cluster);
    read(j, "max_records_per_query", c.clustering.max_records_per_query);
    read(j, "per_function_target", c.filter.per_function_target);
    read(j, "min_cluster_records", c.filter.min_cluster_records);
    read(j, "max_exemplars_per_cluster", c.table.max_exemplars_per_cluster);
    read(j, "seed", c.seed);
    read(j, "holdout_fraction", c.holdout_fraction);
    if (auto p = j.find("prompt"); p != j.end()) {
      require_keys(*p, {"variant", "elide_output_prefix"}, "prompt");
      std::string variant = "verbose";
      read(*p, "variant", variant);
      if (variant == "verbose") {
        c.prompt_variant = paramgen::SystemPromptVariant::kVerbose;
      } else if (variant == "minimal") {
        c.prompt_variant = paramgen::SystemPromptVariant::kMinimal;
      } else {
        fail(ErrorCode::kInvalidInput, "prompt.variant must be verbose or minimal");
      }
      read(*p, "elide_output_prefix", c.elide_output_prefix);
    }
    if (auto m = j.find("token_mapping"); m != j.end()) c.token_mapping = paramgen::TokenMapping::from_json(*m);
    if (auto l = j.find("latency"); l != j.end()) {
      require_keys(*l, {"routing_ms", "small_ms", "large_ms"}, "latency");
      read(*l, "routing_ms", c.latency.routing_ms);
      read(*l, "small_ms", c.latency.small_ms);
      read(*l, "large_ms", c.latency.large_ms);
    }
    read(j, "jitter_ms", c.jitter_ms);
    if (auto g = j.find("gateway"); g != j.end()) {
      require_keys(*g,
                   {"host", "port", "small_backend", "small_backend_url", "slot_map", "keyword_table",
                    "large_backend_url", "small_deadline_ms", "large_deadline_ms", "routing_deadline_us",
                    "decision_log"},
                   "gateway");
      read(*g, "host", c.host);
      read(*g, "port", c.port);
      read(*g, "small_backend", c.small_backend);
      read(*g, "small_backend_url", c.small_backend_url);
      if (auto s = g->find("slot_map"); s != g->end()) c.slot_map = paramgen::SlotMap::from_json(*s);
      if (auto k = g->find("keyword_table"); k != g->end()) c.keyword_table = paramgen::KeywordTable::from_json(*k);
      read(*g, "large_backend_url", c.large_backend_url);
      read(*g, "small_deadline_ms", c.small_deadline_ms);
      read(*g, "large_deadline_ms", c.large_deadline_ms);
      if (auto d = g->find("routing_deadline_us"); d != g->end()) {
        c.table.thresholds.deadline = std::chrono::microseconds(d->get<std::int64_t>());
      }
      read(*g, "decision_log", c.decision_log);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("config: ") + e.what());
  }
  return c;
}

void PipelineConfig::set_threshold(std::string_view name, double value) {
  if (name == "tau") {
    clustering.similarity_threshold = value;
  } else if (name == "near_duplicate") {
    clustering.near_duplicate_threshold = value;
  } else if (name == "theta") {
    filter.dominance_threshold = value;
  } else if (name == "tau_match") {
    table.thresholds.exact_match = value;
  } else if (name == "tau_centroid") {
    table.thresholds.centroid = value;
  } else if (name == "delta") {
    table.thresholds.margin = value;
  } else {
    fail(ErrorCode::kInvalidInput, "unknown threshold '" + std::string(name) + "'");
  }
}

void PipelineConfig::validate(bool allow_small_batch) const {
  clustering.validate(allow_small_batch);
  filter.validate();
  table.thresholds.validate();
  latency.validate();
  if (vectorizer.kind != "builtin" && vectorizer.kind != "http") {
    fail(ErrorCode::kInvalidInput, "vectorizer.kind must be builtin or http");
  }
  if (vectorizer.kind == "http" && vectorizer.url.empty()) fail(ErrorCode::kInvalidInput, "vectorizer.url is required");
  if (small_backend != "stub" && small_backend != "http") {
    fail(ErrorCode::kInvalidInput, "gateway.small_backend must be stub or http");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorCode::kInvalidInput, "holdout_fraction must be in [0, 1)");
  }
  if (jitter_ms < 0) fail(ErrorCode::kInvalidInput, "jitter_ms must be non-negative");
  if (small_deadline_ms <= 0 || large_deadline_ms <= 0) fail(ErrorCode::kInvalidInput, "deadlines must be positive");
  if (table.max_exemplars_per_cluster == 0) fail(ErrorCode::kInvalidInput, "max_exemplars_per_cluster must be positive");
}

std::unique_ptr<embedding::Vectorizer> make_vectorizer(const VectorizerConfig& config) {
  if (config.kind == "http") {
    embedding::HttpVectorizerConfig h;
    h.url = config.url;
    h.name = config.name;
    h.dimension = config.dimension;
    h.timeout = std::chrono::milliseconds(config.timeout_ms);
    return std::make_unique<embedding::HttpVectorizer>(std::move(h));
  }
  return std::make_unique<embedding::HashedNgramVectorizer>(config.dimension);
}

std::vector<clustering::ClusterMember> build_members(std::span<const corpus::FunctionCallRecord> records,
                                                     const embedding::Vectorizer& vectorizer,
                                                     const ner::EntityDictionary& dict) {
  auto groups = corpus::group_by_query(records);
  std::vector<std::string> texts;
  texts.reserve(groups.size());
  for (const auto& g : groups) texts.push_back(g.query_text);
  auto vectors = embedding::embed_batch(texts, vectorizer);
  std::vector<clustering::ClusterMember> members;
  members.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    clustering::ClusterMember m;
    m.templates = {ner::template_of(groups[i].query_text, dict)};
    m.group = std::move(groups[i]);
    m.embedding = std::move(vectors[i]);
    members.push_back(std::move(m));
  }
  return members;
}

Snapshot cluster_records(std::span<const corpus::FunctionCallRecord> records, const embedding::Vectorizer& vectorizer,
                         const ner::EntityDictionary& dict, const clustering::ClusteringConfig& config) {
  auto members = build_members(records, vectorizer, dict);
  std::vector<clustering::QueryCluster> acc;
  std::vector<clustering::ClusterMember> batch;
  std::size_t batch_records = 0;
  auto flush = [&] {
    if (batch.empty()) return;
    auto clusters = clustering::cluster(std::move(batch), config.similarity_threshold);
    acc = clustering::combine_batches(std::move(acc), std::move(clusters), config.similarity_threshold);
    batch.clear();
    batch_records = 0;
  };
  for (auto& m : members) {
    if (!batch.empty() && batch_records + m.weight() > config.batch_size) flush();
    batch_records += m.weight();
    batch.push_back(std::move(m));
  }
  flush();
  for (auto& c : acc) c = clustering::prune(std::move(c), config);

  Snapshot s;
  s.vectorizer_name = vectorizer.info().name;
  s.dimension = vectorizer.info().dimension;
  s.clusters = std::move(acc);
  finish_snapshot(s);
  return s;
}

Snapshot filter_snapshot(Snapshot snapshot, const filtering::FilterConfig& config) {
  snapshot.clusters = filtering::label_clusters(std::move(snapshot.clusters), config);
  finish_snapshot(snapshot);
  return snapshot;
}

Snapshot merge_snapshots(const Snapshot& existing, const Snapshot& incoming,
                         const clustering::ClusteringConfig& config) {
  if (!existing.clusters.empty() && !incoming.clusters.empty() &&
      (existing.vectorizer_name != incoming.vectorizer_name || existing.dimension != incoming.dimension)) {
    fail(ErrorCode::kValidation, "snapshots were built with different vectorizers");
  }
  Snapshot s;
  const Snapshot& shape = incoming.clusters.empty() ? existing : incoming;
  s.vectorizer_name = shape.vectorizer_name;
  s.dimension = shape.dimension;
  s.clusters = clustering::merge_batches(existing.clusters, incoming.clusters, config.similarity_threshold, config);
  finish_snapshot(s);
  return s;
}

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> thresholds;
  bool allow_small_batch = false;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig c;
  if (!g.config_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(g.config_path));
    } catch (const json::exception& e) {
      fail(ErrorCode::kInvalidInput, g.config_path + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kInvalidInput, e.what());
    }
    c = PipelineConfig::from_json(j);
  }
  if (g.seed) c.seed = *g.seed;
  for (const auto& kv : g.thresholds) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kInvalidInput, "--threshold expects name=value, got '" + kv + "'");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(kv.substr(eq + 1), &used);
      if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidInput, "--threshold value is not a number: '" + kv + "'");
    }
    c.set_threshold(kv.substr(0, eq), value);
  }
  c.validate(g.allow_small_batch);
  return c;
}

std::vector<corpus::FunctionCallRecord> read_records(const std::string& path, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  auto result = corpus::ingest_records(in);
  for (const auto& d : result.diagnostics) err << path << ":" << d.line << ": " << d.reason << "\n";
  return std::move(result.records);
}

ner::EntityDictionary load_dictionary(const std::vector<std::string>& paths, std::ostream& err) {
  std::vector<std::filesystem::path> sources(paths.begin(), paths.end());
  auto load = ner::load_dictionaries(sources);
  for (const auto& d : load.diagnostics) err << "dictionary:" << d.line << ": " << d.reason << "\n";
  return std::move(load.dictionary);
}

Snapshot load_snapshot_arg(const std::string& path) {
  return clustering::load_snapshot(clustering::resolve_snapshot(path));
}

// Explicit output path, or the next snapshot file in the snapshot directory.
std::filesystem::path snapshot_output(const std::string& output, const PipelineConfig& c) {
  if (!output.empty()) return output;
  if (c.snapshot_dir.empty()) fail(ErrorCode::kInvalidInput, "no --output and no paths.snapshot_dir configured");
  return clustering::next_snapshot_path(c.snapshot_dir);
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kTimeout:
    case ErrorCode::kServiceUnavailable: return kBackendError;
    default: return kDataError;
  }
}

std::atomic<gateway::GatewayServer*> g_server{nullptr};

extern "C" void handle_stop_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

std::shared_ptr<const paramgen::GenerationBackend> make_small_backend(const PipelineConfig& c) {
  if (c.small_backend == "http") {
    paramgen::HttpGenerationConfig h;
    h.url = c.small_backend_url;
    h.variant = c.prompt_variant;
    return std::make_shared<paramgen::HttpGenerationBackend>(std::move(h));
  }
  return std::make_shared<paramgen::StubBackend>(c.slot_map, c.keyword_table);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Function-call acceleration pipeline and gateway", "fcaccel"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline config");
  app.add_option("--seed", g.seed, "Seed for sampling, splitting and jitter");
  app.add_option("--threshold", g.thresholds, "Threshold override name=value (repeatable)");
  app.add_flag("--allow-small-batch", g.allow_small_batch, "Accept batch sizes below the production range");

  std::string input, output, existing, incoming, snapshot, query, holdout, diagnostics_path;
  std::vector<std::string> dictionaries;
  std::size_t history_length = 0;

  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL record stream");
  ingest->add_option("--input", input, "Raw records (JSONL)");
  ingest->add_option("--output", output, "Validated records (JSONL)")->required();
  ingest->add_option("--diagnostics", diagnostics_path, "Write diagnostics here as JSONL");

  auto* cluster = app.add_subcommand("cluster", "Cluster records into a snapshot");
  cluster->add_option("--input", input, "Validated records (JSONL)");
  cluster->add_option("--dictionary", dictionaries, "Entity dictionary TSV (repeatable)");
  cluster->add_option("--output", output, "Snapshot file (default: next file in the snapshot directory)");

  auto* filter = app.add_subcommand("filter", "Label clusters simple or complex");
  filter->add_option("--snapshot", snapshot, "Snapshot file or directory")->required();
  filter->add_option("--output", output, "Labeled snapshot file");

  auto* build_train = app.add_subcommand("build-train", "Write balanced training examples");
  build_train->add_option("--snapshot", snapshot, "Labeled snapshot file or directory")->required();
  build_train->add_option("--output", output, "Training JSONL");
  build_train->add_option("--holdout", holdout, "Held-out JSONL; enables the split");

  auto* merge = app.add_subcommand("merge", "Merge a new snapshot into the existing store");
  merge->add_option("--existing", existing, "Existing snapshot file or directory (optional)");
  merge->add_option("--incoming", incoming, "Incoming clustered snapshot")->required();
  merge->add_option("--output", output, "Merged snapshot file");

  auto* route = app.add_subcommand("route", "Route one query and print the decision");
  route->add_option("--snapshot", snapshot, "Labeled snapshot file or directory")->required();
  route->add_option("--query", query, "Query text")->required();
  route->add_option("--history-length", history_length, "Number of prior turns");
  route->add_option("--dictionary", dictionaries, "Entity dictionary TSV (repeatable)");

  auto* replay = app.add_subcommand("replay", "Simulate serving latency over a labeled corpus");
  replay->add_option("--snapshot", snapshot, "Labeled snapshot file or directory")->required();
  replay->add_option("--input", input, "Records to replay (JSONL)");
  replay->add_option("--dictionary", dictionaries, "Entity dictionary TSV (repeatable)");
  replay->add_option("--output", output, "Report JSON (default stdout)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  serve->add_option("--snapshot", snapshot, "Labeled snapshot file or directory");
  serve->add_option("--dictionary", dictionaries, "Entity dictionary TSV (repeatable)");
  std::optional<int> port;
  serve->add_option("--port", port, "Listen port (0 picks one)");

  auto* report = app.add_subcommand("report", "Print a traffic report in readable form");
  report->add_option("--input", input, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int rc = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return rc == 0 ? kSuccess : kUsage;
  }

  PipelineConfig c;
  try {
    c = load_config(g);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (dictionaries.empty()) dictionaries = c.dictionaries;

  try {
    if (*ingest) {
      const std::string path = input.empty() ? c.corpus : input;
      if (path.empty()) fail(ErrorCode::kInvalidInput, "no --input and no paths.corpus configured");
      std::ifstream in(path, std::ios::binary);
      if (!in) fail(ErrorCode::kIo, "cannot open " + path);
      auto result = corpus::ingest_records(in);
      std::string diag;
      for (const auto& d : result.diagnostics) {
        err << path << ":" << d.line << ": " << d.reason << "\n";
        ordered_json j;
        j["line"] = d.line;
        j["reason"] = d.reason;
        diag += j.dump() + "\n";
      }
      write_file_atomic(output, corpus::serialize_records(result.records));
      if (!diagnostics_path.empty()) write_file_atomic(diagnostics_path, diag);
      err << result.records.size() << " records kept, " << result.diagnostics.size() << " diagnostics\n";
    } else if (*cluster) {
      const std::string path = input.empty() ? c.corpus : input;
      if (path.empty()) fail(ErrorCode::kInvalidInput, "no --input and no paths.corpus configured");
      const auto records = read_records(path, err);
      if (records.empty()) fail(ErrorCode::kEmptyCorpus, "no valid records in " + path);
      const auto dict = load_dictionary(dictionaries, err);
      const auto vectorizer = make_vectorizer(c.vectorizer);
      const auto snap = cluster_records(records, *vectorizer, dict, c.clustering);
      const auto target = snapshot_output(output, c);
      clustering::save_snapshot(target, snap);
      err << snap.clusters.size() << " clusters -> " << target.string() << "\n";
    } else if (*filter) {
      auto snap = filter_snapshot(load_snapshot_arg(snapshot), c.filter);
      const auto target = snapshot_output(output, c);
      clustering::save_snapshot(target, snap);
      std::size_t simple = 0;
      for (const auto& cl : snap.clusters) simple += cl.label.is_simple() ? 1 : 0;
      err << simple << " of " << snap.clusters.size() << " clusters simple -> " << target.string() << "\n";
    } else if (*build_train) {
      const std::string target = output.empty() ? c.training_output : output;
      if (target.empty()) fail(ErrorCode::kInvalidInput, "no --output and no paths.training_output configured");
      const auto snap = load_snapshot_arg(snapshot);
      filtering::PromptStyle style{c.prompt_variant, c.token_mapping, c.elide_output_prefix};
      auto sample = filtering::balanced_sample(snap.clusters, c.filter, c.seed, style);
      for (const auto& d : sample.diagnostics) err << "build-train: " << d << "\n";
      if (holdout.empty()) {
        write_file_atomic(target, filtering::serialize_examples(sample.examples));
      } else {
        auto split = filtering::split_holdout(std::move(sample.examples), c.seed, c.holdout_fraction);
        write_file_atomic(target, filtering::serialize_examples(split.train));
        write_file_atomic(holdout, filtering::serialize_examples(split.holdout));
      }
    } else if (*merge) {
      Snapshot prior;
      if (!existing.empty()) {
        const auto resolved = clustering::resolve_snapshot(existing);
        if (!std::filesystem::is_directory(resolved)) prior = clustering::load_snapshot(resolved);
      }
      const auto next = load_snapshot_arg(incoming);
      const auto merged = merge_snapshots(prior, next, c.clustering);
      const auto target = snapshot_output(output, c);
      clustering::save_snapshot(target, merged);
      err << merged.clusters.size() << " clusters -> " << target.string() << "\n";
    } else if (*route) {
      const auto table = gateway::load_routing_table(snapshot, c.table);
      const auto dict = load_dictionary(dictionaries, err);
      const auto vectorizer = make_vectorizer(c.vectorizer);
      const auto d = router::match_query(query, history_length, *table, *vectorizer, dict);
      auto j = router::to_json(d);
      j["snapshot_id"] = table->snapshot_id();
      out << j.dump() << "\n";
    } else if (*replay) {
      const std::string path = input.empty() ? c.corpus : input;
      if (path.empty()) fail(ErrorCode::kInvalidInput, "no --input and no paths.corpus configured");
      const auto records = read_records(path, err);
      std::vector<std::string> diags;
      const auto table = gateway::load_routing_table(snapshot, c.table, &diags);
      for (const auto& d : diags) err << "routing table: " << d << "\n";
      const auto dict = load_dictionary(dictionaries, err);
      const auto vectorizer = make_vectorizer(c.vectorizer);
      const auto r = gateway::replay(records, *table, *vectorizer, dict, {c.latency, c.jitter_ms, c.seed});
      write_output(output, gateway::to_json(r).dump(2) + "\n", out);
    } else if (*serve) {
      const std::string snap_path = snapshot.empty() ? c.snapshot_dir : snapshot;
      if (snap_path.empty()) fail(ErrorCode::kInvalidInput, "no --snapshot and no paths.snapshot_dir configured");
      std::vector<std::string> diags;
      auto table = gateway::load_routing_table(snap_path, c.table, &diags);
      for (const auto& d : diags) err << "routing table: " << d << "\n";
      auto dict = std::make_shared<const ner::EntityDictionary>(load_dictionary(dictionaries, err));
      std::shared_ptr<const embedding::Vectorizer> vectorizer = make_vectorizer(c.vectorizer);
      std::shared_ptr<const gateway::LargeModelBackend> large;
      if (!c.large_backend_url.empty()) large = std::make_shared<gateway::HttpLargeModelBackend>(c.large_backend_url);
      gateway::GatewayConfig gc;
      gc.small_deadline = std::chrono::milliseconds(c.small_deadline_ms);
      gc.large_deadline = std::chrono::milliseconds(c.large_deadline_ms);
      gc.mapping = c.token_mapping;
      gc.table_options = c.table;
      gateway::Gateway gw(gc, vectorizer, dict, make_small_backend(c), large, table);
      std::ofstream log_file;
      std::mutex log_mutex;
      if (!c.decision_log.empty()) {
        log_file.open(c.decision_log, std::ios::app);
        if (!log_file) fail(ErrorCode::kIo, "cannot open decision log " + c.decision_log);
        gw.set_decision_log([&](const std::string& line) {
          std::lock_guard lock(log_mutex);
          log_file << line << '\n';
          log_file.flush();
        });
      }
      gateway::GatewayServer server(gw, c.host, port.value_or(c.port));
      g_server = &server;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      err << "listening on " << c.host << ":" << server.port() << " snapshot " << table->snapshot_id() << "\n";
      server.run();
      g_server = nullptr;
    } else if (*report) {
      out << gateway::render(gateway::report_from_json(json::parse(read_file(input))));
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kSuccess;
}

}  // namespace fcaccel::cli
