#pragma once

// Simple/complex labeling by dominant-function share, cluster cleaning and
// balanced distillation data.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcaccel/clustering.hpp"
#include "fcaccel/paramgen.hpp"

namespace fcaccel::filtering {

struct FilterConfig {
  double dominance_threshold = 0.9;
  std::size_t per_function_target = 500;
  std::size_t min_cluster_records = 5;

  // Threshold must exceed 0.5 so a passing dominant function is unique.
  void validate() const;
};

clustering::ClusterLabel classify_cluster(const clustering::QueryCluster& cluster, const FilterConfig& config);

// Keeps only records calling the dominant function; emptied groups are
// removed. Throws kInvalidInput unless the cluster is labeled simple.
clustering::QueryCluster drop_nondominant(clustering::QueryCluster cluster);

// Labels every cluster and cleans the simple ones.
std::vector<clustering::QueryCluster> label_clusters(std::vector<clustering::QueryCluster> clusters,
                                                     const FilterConfig& config);

// Greatest record under corpus::preferred_over. Throws kInvalidInput on an empty group.
const corpus::FunctionCallRecord& select_representative(const corpus::QueryGroup& group);

struct TrainingExample {
  std::string prompt;
  std::string completion;
  std::string source_record_id;
  std::string function_name;

  bool operator==(const TrainingExample&) const = default;
};

struct PromptStyle {
  paramgen::SystemPromptVariant variant = paramgen::SystemPromptVariant::kVerbose;
  paramgen::TokenMapping mapping;
  bool elide_output_prefix = false;
};

TrainingExample make_example(const corpus::FunctionCallRecord& record, const PromptStyle& style = {});

struct SampleResult {
  std::vector<TrainingExample> examples;
  std::vector<std::string> diagnostics;
};

// Per dominant function: one representative per query group, seeded
// downsampling above the target, supplementing from further records of the
// same groups (round-robin, no repetition) below it.
SampleResult balanced_sample(std::span<const clustering::QueryCluster> clusters, const FilterConfig& config,
                             std::uint64_t seed, const PromptStyle& style = {});

struct HoldoutSplit {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> holdout;
};

HoldoutSplit split_holdout(std::vector<TrainingExample> examples, std::uint64_t seed, double holdout_fraction = 0.05);

ordered_json to_json(const TrainingExample& example);
std::string serialize_examples(std::span<const TrainingExample> examples);

}  // namespace fcaccel::filtering
