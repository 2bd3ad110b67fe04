#pragma once

// Threshold average-linkage clustering of query groups, record-weighted
// centroids, cross-batch merging and cluster pruning.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fcaccel/corpus.hpp"
#include "fcaccel/embedding.hpp"
#include "fcaccel/ner.hpp"

namespace fcaccel::clustering {

struct ClusterMember {
  corpus::QueryGroup group;
  embedding::EmbeddingVector embedding;
  std::vector<ner::QueryTemplate> templates;  // sorted, unique

  std::size_t weight() const { return group.weight(); }
};

enum class LabelKind { kUnlabeled, kSimple, kComplex };

struct ClusterLabel {
  LabelKind kind = LabelKind::kUnlabeled;
  std::string dominant_function;  // set iff kind == kSimple

  static ClusterLabel unlabeled() { return {}; }
  static ClusterLabel simple(std::string function) { return {LabelKind::kSimple, std::move(function)}; }
  static ClusterLabel complex() { return {LabelKind::kComplex, {}}; }
  bool is_simple() const noexcept { return kind == LabelKind::kSimple; }
  bool operator==(const ClusterLabel&) const = default;
};

std::string_view to_string(LabelKind kind);

struct QueryCluster {
  std::string cluster_id;
  std::vector<ClusterMember> members;  // sorted by query text
  embedding::EmbeddingVector centroid;
  corpus::FunctionHistogram function_histogram;
  ClusterLabel label;

  std::vector<ner::QueryTemplate> templates() const;
  std::size_t record_count() const;
  const std::string& first_query() const { return members.front().group.query_text; }
};

struct ClusteringConfig {
  double similarity_threshold = 0.85;
  std::size_t batch_size = 100000;
  std::size_t max_queries_per_cluster = 200;
  std::size_t max_records_per_query = 5;
  double near_duplicate_threshold = 0.98;

  static constexpr std::size_t kMinBatch = 80000;
  static constexpr std::size_t kMaxBatch = 100000;

  // Throws kInvalidInput. Small batches are only accepted when explicitly allowed.
  void validate(bool allow_small_batch = false) const;
};

// Average-linkage agglomeration over unit vectors. Item i's tie-break rank is
// its index, so callers pass items pre-sorted by their key. Returns index
// lists, each ascending, ordered by their smallest index.
std::vector<std::vector<std::size_t>> average_linkage_partition(std::span<const embedding::EmbeddingVector> items,
                                                                double tau);

// Builds clusters from member groups (any order). Empty input -> empty output.
std::vector<QueryCluster> cluster(std::vector<ClusterMember> members, double tau);

// normalize(sum of w_i * v_i), w_i = record count. Throws kDegenerateCentroid.
embedding::EmbeddingVector compute_centroid(std::span<const ClusterMember> members);
inline embedding::EmbeddingVector compute_centroid(const QueryCluster& c) { return compute_centroid(c.members); }

// Sorts members, recomputes histogram and centroid.
void refresh(QueryCluster& cluster);

// Second-level clustering on centroids. Each batch is already clustered at tau,
// so only clusters from different batches may join. Labels of joined clusters
// reset to unlabeled. No pruning.
std::vector<QueryCluster> combine_batches(std::vector<QueryCluster> existing, std::vector<QueryCluster> incoming,
                                          double tau);

// combine_batches followed by prune on every cluster.
std::vector<QueryCluster> merge_batches(std::vector<QueryCluster> existing, std::vector<QueryCluster> incoming,
                                        double tau, const ClusteringConfig& config);

QueryCluster prune(QueryCluster cluster, const ClusteringConfig& config);

// Content-derived ids, unique within the list.
void assign_cluster_ids(std::vector<QueryCluster>& clusters);

}  // namespace fcaccel::clustering
