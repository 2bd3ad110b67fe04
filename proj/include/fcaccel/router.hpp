#pragma once

// Per-query small/large routing: complex-template veto, template match,
// exemplar similarity, nearest-centroid with margin.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcaccel/clustering.hpp"
#include "fcaccel/embedding.hpp"
#include "fcaccel/ner.hpp"
#include "fcaccel/util.hpp"

namespace fcaccel::router {

struct RouterThresholds {
  double exact_match = 0.92;  // exemplar similarity
  double centroid = 0.88;
  double margin = 0.05;
  std::chrono::microseconds deadline{50'000};

  void validate() const;
};

struct SimpleEntry {
  std::string cluster_id;
  std::string dominant_function;
  embedding::EmbeddingVector centroid;
  std::vector<embedding::EmbeddingVector> exemplars;
  std::vector<std::string> templates;  // patterns
};

struct TableOptions {
  RouterThresholds thresholds;
  std::size_t max_exemplars_per_cluster = 200;
};

// Immutable once built. Exemplars and centroids are packed row-major for
// a single linear scan per query.
class RoutingTable {
 public:
  RoutingTable() = default;

  const std::string& snapshot_id() const noexcept { return snapshot_id_; }
  const std::string& vectorizer_name() const noexcept { return vectorizer_name_; }
  std::size_t dimension() const noexcept { return dimension_; }
  const RouterThresholds& thresholds() const noexcept { return thresholds_; }
  const std::vector<SimpleEntry>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& complex_templates() const noexcept { return complex_templates_; }
  std::size_t exemplar_count() const noexcept { return exemplar_owner_.size(); }

  bool is_complex_template(const std::string& pattern) const;
  // Entry index owning a simple template, if any.
  std::optional<std::size_t> entry_for_template(const std::string& pattern) const;

  struct Best {
    double score = -2.0;
    std::size_t entry = 0;
  };
  Best best_exemplar(std::span<const double> query) const;
  // Best centroid, and the best among entries whose dominant function differs.
  std::pair<Best, Best> best_centroids(std::span<const double> query) const;

 private:
  friend RoutingTable build_routing_table(std::span<const clustering::QueryCluster>, std::string, std::string,
                                          const TableOptions&, std::vector<std::string>*);

  std::string snapshot_id_;
  std::string vectorizer_name_;
  std::size_t dimension_ = 0;
  RouterThresholds thresholds_;
  std::vector<SimpleEntry> entries_;
  std::vector<std::string> complex_templates_;  // sorted
  std::map<std::string, std::size_t, std::less<>> template_index_;
  std::vector<double> exemplar_matrix_;
  std::vector<std::size_t> exemplar_owner_;
  std::vector<double> centroid_matrix_;
};

// Only simple clusters become entries. Templates seen in a complex cluster,
// or in simple clusters with different dominant functions, become complex.
RoutingTable build_routing_table(std::span<const clustering::QueryCluster> clusters, std::string snapshot_id,
                                 std::string vectorizer_name, const TableOptions& options = {},
                                 std::vector<std::string>* diagnostics = nullptr);

enum class Route { kSmall, kLarge };

enum class Reason {
  kTemplateMatch,
  kExemplarMatch,
  kCentroidMatch,
  kNoMatch,
  kComplexTemplate,
  kBelowMargin,
  kVectorizerError,
  kDeadlineExceeded,
};

std::string_view to_string(Route route);
std::string_view to_string(Reason reason);

struct RoutingDecision {
  Route route = Route::kLarge;
  Reason reason = Reason::kNoMatch;
  std::optional<std::string> matched_cluster;
  std::optional<std::string> matched_function;
  std::optional<double> score;
  std::int64_t elapsed_us = 0;
  std::vector<ner::EntitySpan> spans;
  std::string query_template;
};

// Never throws; every failure routes large. History does not influence routing.
// Offline replay disables the wall-clock deadline to stay deterministic.
RoutingDecision match_query(std::string_view query, std::size_t history_length, const RoutingTable& table,
                            const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict,
                            bool enforce_deadline = true);

ordered_json to_json(const RoutingDecision& decision);
// Metrics-log line: query_hash, route, reason, score, elapsed_us.
std::string decision_log_line(std::string_view query, const RoutingDecision& decision);

}  // namespace fcaccel::router
