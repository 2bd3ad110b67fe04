#pragma once

// Offline pipeline commands and their shared configuration.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fcaccel/clustering.hpp"
#include "fcaccel/embedding.hpp"
#include "fcaccel/filtering.hpp"
#include "fcaccel/gateway.hpp"
#include "fcaccel/ner.hpp"
#include "fcaccel/paramgen.hpp"
#include "fcaccel/router.hpp"
#include "fcaccel/snapshot.hpp"

namespace fcaccel::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataError = 2, kBackendError = 3 };

struct VectorizerConfig {
  std::string kind = "builtin";  // builtin | http
  std::string url;
  std::string name = "http-embedding";
  std::size_t dimension = embedding::kDefaultDimension;
  std::int64_t timeout_ms = 200;
};

struct PipelineConfig {
  // Paths; command-line flags override them.
  std::string corpus;
  std::vector<std::string> dictionaries;
  std::string snapshot_dir;
  std::string training_output;

  VectorizerConfig vectorizer;
  clustering::ClusteringConfig clustering;
  filtering::FilterConfig filter;
  router::TableOptions table;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.05;

  paramgen::SystemPromptVariant prompt_variant = paramgen::SystemPromptVariant::kVerbose;
  bool elide_output_prefix = false;
  paramgen::TokenMapping token_mapping;

  gateway::LatencyModel latency;
  std::int64_t jitter_ms = 0;

  // Serving.
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string small_backend = "stub";  // stub | http
  std::string small_backend_url;
  paramgen::SlotMap slot_map = paramgen::SlotMap::defaults();
  paramgen::KeywordTable keyword_table;
  std::string large_backend_url;
  std::int64_t small_deadline_ms = 300;
  std::int64_t large_deadline_ms = 3000;
  std::string decision_log;

  // Throws kInvalidInput on unknown keys or out-of-range values.
  static PipelineConfig from_json(const json& j);
  // Names: tau, near_duplicate, theta, tau_match, tau_centroid, delta.
  void set_threshold(std::string_view name, double value);
  void validate(bool allow_small_batch) const;
};

std::unique_ptr<embedding::Vectorizer> make_vectorizer(const VectorizerConfig& config);

// One member per canonical query, with its embedding and template.
std::vector<clustering::ClusterMember> build_members(std::span<const corpus::FunctionCallRecord> records,
                                                     const embedding::Vectorizer& vectorizer,
                                                     const ner::EntityDictionary& dict);

// Clusters records in batches of at most batch_size records (a query group
// is never split), folds the batches together and prunes.
clustering::Snapshot cluster_records(std::span<const corpus::FunctionCallRecord> records,
                                     const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict,
                                     const clustering::ClusteringConfig& config);

// Labels clusters and cleans simple ones.
clustering::Snapshot filter_snapshot(clustering::Snapshot snapshot, const filtering::FilterConfig& config);

clustering::Snapshot merge_snapshots(const clustering::Snapshot& existing, const clustering::Snapshot& incoming,
                                     const clustering::ClusteringConfig& config);

// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fcaccel::cli
