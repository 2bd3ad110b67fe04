#include "fcaccel/filtering.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "fcaccel/error.hpp"

namespace fcaccel::filtering {

using clustering::ClusterLabel;
using clustering::QueryCluster;
using corpus::FunctionCallRecord;

void FilterConfig::validate() const {
  if (!(dominance_threshold > 0.5 && dominance_threshold <= 1.0)) {
    fail(ErrorCode::kInvalidInput, "dominance threshold must be in (0.5, 1]");
  }
  if (per_function_target == 0) fail(ErrorCode::kInvalidInput, "per_function_target must be positive");
}

ClusterLabel classify_cluster(const QueryCluster& cluster, const FilterConfig& config) {
  config.validate();
  std::size_t total = 0;
  const std::string* top = nullptr;
  std::size_t top_count = 0;
  for (const auto& [f, n] : cluster.function_histogram) {
    total += n;
    if (n > top_count) {
      top = &f;
      top_count = n;
    }
  }
  if (!top || total < config.min_cluster_records) return ClusterLabel::complex();
  const double share = static_cast<double>(top_count) / static_cast<double>(total);
  if (share >= config.dominance_threshold) return ClusterLabel::simple(*top);
  return ClusterLabel::complex();
}

QueryCluster drop_nondominant(QueryCluster cluster) {
  if (!cluster.label.is_simple()) fail(ErrorCode::kInvalidInput, "drop_nondominant requires a simple cluster");
  const std::string& f = cluster.label.dominant_function;
  std::vector<clustering::ClusterMember> kept;
  for (auto& m : cluster.members) {
    auto& g = m.group;
    if (!g.records.empty()) {
      std::erase_if(g.records, [&](const FunctionCallRecord& r) { return r.called_function != f; });
      g.rebuild_histogram();
    } else {
      std::erase_if(g.function_histogram, [&](const auto& kv) { return kv.first != f; });
    }
    if (g.weight() > 0) kept.push_back(std::move(m));
  }
  if (kept.empty()) fail(ErrorCode::kInvalidInput, "simple cluster has no dominant-function records");
  cluster.members = std::move(kept);
  clustering::refresh(cluster);
  return cluster;
}

std::vector<QueryCluster> label_clusters(std::vector<QueryCluster> clusters, const FilterConfig& config) {
  for (auto& c : clusters) {
    c.label = classify_cluster(c, config);
    if (c.label.is_simple()) {
      c = drop_nondominant(std::move(c));
      for (const auto& [f, n] : c.function_histogram) {
        if (f != c.label.dominant_function && n > 0) {
          fail(ErrorCode::kValidation, "cluster " + c.cluster_id + " retains non-dominant records");
        }
      }
    }
  }
  return clusters;
}

const FunctionCallRecord& select_representative(const corpus::QueryGroup& group) {
  if (group.records.empty()) fail(ErrorCode::kInvalidInput, "select_representative: empty group");
  return *std::min_element(group.records.begin(), group.records.end(), corpus::preferred_over);
}

TrainingExample make_example(const FunctionCallRecord& record, const PromptStyle& style) {
  const auto tools = paramgen::optimize_schema_tokens(record.tools, style.mapping);
  TrainingExample ex;
  ex.prompt = paramgen::assemble_prompt(tools, record.history, record.query, style.variant).rendered;
  auto result = paramgen::apply_parameter_aliases({record.called_function, record.arguments}, style.mapping);
  ex.completion = paramgen::serialize_fc_output(result, style.elide_output_prefix);
  ex.source_record_id = record.record_id;
  ex.function_name = record.called_function;
  return ex;
}

SampleResult balanced_sample(std::span<const QueryCluster> clusters, const FilterConfig& config, std::uint64_t seed,
                             const PromptStyle& style) {
  config.validate();
  SampleResult out;

  // Per function: each group's records in preference order; [0] is the representative.
  std::map<std::string, std::vector<std::vector<const FunctionCallRecord*>>> pools;
  std::vector<const QueryCluster*> simple;
  for (const auto& c : clusters) {
    if (c.label.is_simple()) simple.push_back(&c);
  }
  std::sort(simple.begin(), simple.end(),
            [](const QueryCluster* a, const QueryCluster* b) { return a->cluster_id < b->cluster_id; });
  for (const QueryCluster* c : simple) {
    for (const auto& m : c->members) {
      std::vector<const FunctionCallRecord*> ranked;
      for (const auto& r : m.group.records) {
        if (r.called_function == c->label.dominant_function) ranked.push_back(&r);
      }
      if (ranked.empty()) continue;
      std::sort(ranked.begin(), ranked.end(),
                [](const FunctionCallRecord* a, const FunctionCallRecord* b) { return corpus::preferred_over(*a, *b); });
      pools[c->label.dominant_function].push_back(std::move(ranked));
    }
  }
  if (pools.empty()) {
    out.diagnostics.push_back("no simple clusters with records; no training data produced");
    return out;
  }

  const std::size_t target = config.per_function_target;
  for (const auto& [function, groups] : pools) {
    std::vector<const FunctionCallRecord*> chosen;
    if (groups.size() > target) {
      // Partial Fisher-Yates over group indices, then restore pool order.
      std::mt19937_64 rng(seed ^ fnv1a64(function));
      std::vector<std::size_t> idx(groups.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < target; ++i) {
        const auto j = i + uniform_index(rng, idx.size() - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(target);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) chosen.push_back(groups[i].front());
    } else {
      for (const auto& g : groups) chosen.push_back(g.front());
      for (std::size_t rank = 1; chosen.size() < target; ++rank) {
        bool any = false;
        for (const auto& g : groups) {
          if (rank >= g.size()) continue;
          any = true;
          chosen.push_back(g[rank]);
          if (chosen.size() == target) break;
        }
        if (!any) break;
      }
      if (chosen.size() < target) {
        out.diagnostics.push_back(function + ": only " + std::to_string(chosen.size()) + " records available for target " +
                                  std::to_string(target));
      }
    }
    for (const FunctionCallRecord* r : chosen) out.examples.push_back(make_example(*r, style));
  }
  return out;
}

HoldoutSplit split_holdout(std::vector<TrainingExample> examples, std::uint64_t seed, double holdout_fraction) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorCode::kInvalidInput, "holdout fraction must be in [0, 1)");
  }
  HoldoutSplit split;
  // Per-example decision keyed on the record id: stable under reordering.
  const auto cutoff = static_cast<std::uint64_t>(holdout_fraction * 1e6);
  for (auto& ex : examples) {
    const std::uint64_t bucket = (fnv1a64(ex.source_record_id) ^ seed) * 0x9e3779b97f4a7c15ULL % 1000000;
    (bucket < cutoff ? split.holdout : split.train).push_back(std::move(ex));
  }
  return split;
}

ordered_json to_json(const TrainingExample& example) {
  ordered_json j;
  j["prompt"] = example.prompt;
  j["completion"] = example.completion;
  j["function_name"] = example.function_name;
  j["source_record_id"] = example.source_record_id;
  return j;
}

std::string serialize_examples(std::span<const TrainingExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

}  // namespace fcaccel::filtering
