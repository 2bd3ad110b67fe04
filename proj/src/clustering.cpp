#include "fcaccel/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "fcaccel/error.hpp"
#include "fcaccel/util.hpp"

namespace fcaccel::clustering {

using embedding::EmbeddingVector;

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCode::kInvalidInput, "similarity threshold must be in (0, 1]");
}

void check_dimensions(std::span<const EmbeddingVector> items) {
  for (const auto& v : items) {
    if (v.empty() || v.dimension() != items.front().dimension()) {
      fail(ErrorCode::kInvalidInput, "embedding dimension mismatch");
    }
  }
}

void merge_templates(std::vector<ner::QueryTemplate>& into, const std::vector<ner::QueryTemplate>& from) {
  into.insert(into.end(), from.begin(), from.end());
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
}

// Folds `from` into `into`, keeping into's text and embedding.
void absorb(ClusterMember& into, ClusterMember&& from) {
  auto& g = into.group;
  for (auto& r : from.group.records) g.records.push_back(std::move(r));
  for (const auto& [f, n] : from.group.function_histogram) g.function_histogram[f] += n;
  merge_templates(into.templates, from.templates);
}

// Members with identical query text collapse into one group.
std::vector<ClusterMember> coalesce_by_text(std::vector<ClusterMember> members) {
  std::stable_sort(members.begin(), members.end(), [](const ClusterMember& a, const ClusterMember& b) {
    return a.group.query_text < b.group.query_text;
  });
  std::vector<ClusterMember> out;
  for (auto& m : members) {
    if (!out.empty() && out.back().group.query_text == m.group.query_text) {
      absorb(out.back(), std::move(m));
    } else {
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kUnlabeled: return "unlabeled";
    case LabelKind::kSimple: return "simple";
    case LabelKind::kComplex: return "complex";
  }
  return "unlabeled";
}

std::vector<ner::QueryTemplate> QueryCluster::templates() const {
  std::vector<ner::QueryTemplate> out;
  for (const auto& m : members) merge_templates(out, m.templates);
  return out;
}

std::size_t QueryCluster::record_count() const {
  std::size_t n = 0;
  for (const auto& m : members) n += m.weight();
  return n;
}

void ClusteringConfig::validate(bool allow_small_batch) const {
  check_tau(similarity_threshold);
  if (!(near_duplicate_threshold > 0.0 && near_duplicate_threshold <= 1.0)) {
    fail(ErrorCode::kInvalidInput, "near_duplicate_threshold must be in (0, 1]");
  }
  if (batch_size == 0 || batch_size > kMaxBatch || (!allow_small_batch && batch_size < kMinBatch)) {
    fail(ErrorCode::kInvalidInput, "batch_size must be within [80000, 100000] (use --allow-small-batch for smaller)");
  }
  if (max_queries_per_cluster == 0 || max_records_per_query == 0) {
    fail(ErrorCode::kInvalidInput, "cluster size limits must be positive");
  }
}

std::vector<std::vector<std::size_t>> average_linkage_partition(std::span<const EmbeddingVector> items, double tau) {
  check_tau(tau);
  const std::size_t n = items.size();
  if (n == 0) return {};
  check_dimensions(items);

  // link[i*n+k]: sum of pairwise similarities between slots i and k. A merged
  // cluster lives in the slot of its smallest index, so (i, j) with i < j is
  // also its tie-break key.
  std::vector<double> link(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    link[i * n + i] = 1.0;
    for (std::size_t k = i + 1; k < n; ++k) {
      const double s = embedding::dot(items[i].values(), items[k].values());
      link[i * n + k] = s;
      link[k * n + i] = s;
    }
  }
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::vector<std::size_t>> slot_members(n);
  for (std::size_t i = 0; i < n; ++i) slot_members[i] = {i};

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  auto avg = [&](std::size_t a, std::size_t b) {
    return link[a * n + b] / static_cast<double>(size[a] * size[b]);
  };
  // Is pair (a,b) strictly better than (c,d)?
  auto better = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    const double x = avg(a, b);
    const double y = avg(c, d);
    if (x != y) return x > y;
    return std::minmax(a, b) < std::minmax(c, d);
  };
  std::vector<std::size_t> best(n, kNone);
  auto recompute_row = [&](std::size_t i) {
    best[i] = kNone;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || !active[k]) continue;
      if (best[i] == kNone || better(i, k, i, best[i])) best[i] = k;
    }
  };
  for (std::size_t i = 0; i < n; ++i) recompute_row(i);

  while (true) {
    std::size_t bi = kNone;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i] || best[i] == kNone) continue;
      if (bi == kNone || better(i, best[i], bi, best[bi])) bi = i;
    }
    if (bi == kNone || avg(bi, best[bi]) < tau) break;

    const std::size_t i = std::min(bi, best[bi]);
    const std::size_t j = std::max(bi, best[bi]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i || k == j) continue;
      const double merged = link[i * n + k] + link[j * n + k];
      link[i * n + k] = merged;
      link[k * n + i] = merged;
    }
    size[i] += size[j];
    active[j] = false;
    auto& into = slot_members[i];
    into.insert(into.end(), slot_members[j].begin(), slot_members[j].end());
    slot_members[j].clear();

    recompute_row(i);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i) continue;
      if (best[k] == i || best[k] == j) {
        recompute_row(k);
      } else if (best[k] == kNone || better(k, i, k, best[k])) {
        best[k] = i;
      }
    }
  }

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    std::sort(slot_members[i].begin(), slot_members[i].end());
    out.push_back(std::move(slot_members[i]));
  }
  return out;
}

EmbeddingVector compute_centroid(std::span<const ClusterMember> members) {
  if (members.empty()) fail(ErrorCode::kInvalidInput, "centroid of an empty cluster");
  const std::size_t dim = members.front().embedding.dimension();
  std::vector<double> sum(dim, 0.0);
  double total_weight = 0.0;
  for (const auto& m : members) {
    if (m.embedding.dimension() != dim) fail(ErrorCode::kInvalidInput, "embedding dimension mismatch");
    const double w = static_cast<double>(m.weight());
    total_weight += w;
    const auto v = m.embedding.values();
    for (std::size_t d = 0; d < dim; ++d) sum[d] += w * v[d];
  }
  double sq = 0.0;
  for (double x : sum) sq += x * x;
  // Relative to the weight mass, so tiny residues from cancellation count as zero.
  if (total_weight <= 0.0 || std::sqrt(sq) <= 1e-9 * total_weight) {
    fail(ErrorCode::kDegenerateCentroid, "weighted member embeddings sum to zero");
  }
  return EmbeddingVector::normalized(std::move(sum));
}

void refresh(QueryCluster& c) {
  if (c.members.empty()) fail(ErrorCode::kInvalidInput, "cluster has no members");
  std::sort(c.members.begin(), c.members.end(), [](const ClusterMember& a, const ClusterMember& b) {
    return a.group.query_text < b.group.query_text;
  });
  c.function_histogram.clear();
  for (const auto& m : c.members) {
    for (const auto& [f, n] : m.group.function_histogram) c.function_histogram[f] += n;
  }
  c.centroid = compute_centroid(c.members);
}

std::vector<QueryCluster> cluster(std::vector<ClusterMember> members, double tau) {
  check_tau(tau);
  if (members.empty()) return {};
  std::stable_sort(members.begin(), members.end(), [](const ClusterMember& a, const ClusterMember& b) {
    return a.group.query_text < b.group.query_text;
  });
  std::vector<EmbeddingVector> vectors;
  vectors.reserve(members.size());
  for (const auto& m : members) vectors.push_back(m.embedding);
  const auto partition = average_linkage_partition(vectors, tau);

  std::vector<QueryCluster> out;
  out.reserve(partition.size());
  for (const auto& part : partition) {
    QueryCluster c;
    for (std::size_t idx : part) c.members.push_back(std::move(members[idx]));
    refresh(c);
    out.push_back(std::move(c));
  }
  assign_cluster_ids(out);
  return out;
}

std::vector<QueryCluster> combine_batches(std::vector<QueryCluster> existing, std::vector<QueryCluster> incoming,
                                          double tau) {
  check_tau(tau);
  std::size_t dim = 0;
  for (const auto* list : {&existing, &incoming}) {
    for (const auto& c : *list) {
      if (dim == 0) dim = c.centroid.dimension();
      if (c.centroid.dimension() != dim) fail(ErrorCode::kInvalidInput, "embedding dimension mismatch");
    }
  }

  // With cannot-link inside each batch, average linkage degenerates to a
  // greedy best-first matching on centroid similarity across batches.
  struct Candidate {
    double similarity;
    std::size_t e;
    std::size_t i;
  };
  std::vector<Candidate> candidates;
  for (std::size_t e = 0; e < existing.size(); ++e) {
    for (std::size_t i = 0; i < incoming.size(); ++i) {
      const double s = embedding::cosine_similarity(existing[e].centroid, incoming[i].centroid);
      if (s >= tau) candidates.push_back({s, e, i});
    }
  }
  auto key = [&](const Candidate& c) {
    const std::string& a = existing[c.e].first_query();
    const std::string& b = incoming[c.i].first_query();
    return a < b ? std::tie(a, b) : std::tie(b, a);
  };
  std::sort(candidates.begin(), candidates.end(), [&](const Candidate& x, const Candidate& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    const auto kx = key(x);
    const auto ky = key(y);
    if (kx != ky) return kx < ky;
    return std::tie(x.e, x.i) < std::tie(y.e, y.i);
  });

  std::vector<std::size_t> partner(existing.size(), existing.size() + incoming.size());
  std::vector<bool> taken(incoming.size(), false);
  for (const auto& c : candidates) {
    if (partner[c.e] < existing.size() + incoming.size() || taken[c.i]) continue;
    partner[c.e] = c.i;
    taken[c.i] = true;
  }

  std::vector<QueryCluster> out;
  out.reserve(existing.size() + incoming.size());
  std::unordered_set<std::string> used_ids;
  for (std::size_t e = 0; e < existing.size(); ++e) {
    QueryCluster c = std::move(existing[e]);
    if (partner[e] < incoming.size()) {
      auto& other = incoming[partner[e]];
      for (auto& m : other.members) c.members.push_back(std::move(m));
      c.members = coalesce_by_text(std::move(c.members));
      c.label = ClusterLabel::unlabeled();
      refresh(c);
    }
    used_ids.insert(c.cluster_id);
    out.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < incoming.size(); ++i) {
    if (taken[i]) continue;
    QueryCluster c = std::move(incoming[i]);
    if (c.cluster_id.empty() || used_ids.contains(c.cluster_id)) c.cluster_id.clear();
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const QueryCluster& a, const QueryCluster& b) {
    if (a.first_query() != b.first_query()) return a.first_query() < b.first_query();
    return a.cluster_id < b.cluster_id;
  });
  assign_cluster_ids(out);
  return out;
}

std::vector<QueryCluster> merge_batches(std::vector<QueryCluster> existing, std::vector<QueryCluster> incoming,
                                        double tau, const ClusteringConfig& config) {
  auto combined = combine_batches(std::move(existing), std::move(incoming), tau);
  for (auto& c : combined) c = prune(std::move(c), config);
  return combined;
}

QueryCluster prune(QueryCluster cluster, const ClusteringConfig& config) {
  if (cluster.members.empty()) fail(ErrorCode::kInvalidInput, "cluster has no members");
  auto heavier = [](const ClusterMember& a, const ClusterMember& b) {
    if (a.weight() != b.weight()) return a.weight() > b.weight();
    return a.group.query_text < b.group.query_text;
  };

  // Near-duplicate queries fold into the heavier group.
  std::vector<ClusterMember> members = coalesce_by_text(std::move(cluster.members));
  std::sort(members.begin(), members.end(), heavier);
  std::vector<ClusterMember> kept;
  for (auto& m : members) {
    auto dup = std::find_if(kept.begin(), kept.end(), [&](const ClusterMember& k) {
      return embedding::cosine_similarity(k.embedding, m.embedding) >= config.near_duplicate_threshold;
    });
    if (dup != kept.end()) {
      absorb(*dup, std::move(m));
    } else {
      kept.push_back(std::move(m));
    }
  }

  // Query cap first, ranked on full record counts.
  std::sort(kept.begin(), kept.end(), heavier);
  if (kept.size() > config.max_queries_per_cluster) kept.resize(config.max_queries_per_cluster);

  for (auto& m : kept) {
    auto& records = m.group.records;
    if (records.size() > config.max_records_per_query) {
      std::sort(records.begin(), records.end(), corpus::preferred_over);
      records.resize(config.max_records_per_query);
    }
    if (!records.empty()) m.group.rebuild_histogram();
  }

  cluster.members = std::move(kept);
  refresh(cluster);
  return cluster;
}

void assign_cluster_ids(std::vector<QueryCluster>& clusters) {
  std::set<std::string> used;
  for (const auto& c : clusters) {
    if (!c.cluster_id.empty()) used.insert(c.cluster_id);
  }
  for (auto& c : clusters) {
    if (!c.cluster_id.empty()) continue;
    std::string basis;
    for (const auto& m : c.members) {
      basis += m.group.query_text;
      basis += '\n';
    }
    std::string id = "c-" + hex64(fnv1a64(basis));
    for (int salt = 1; used.contains(id); ++salt) {
      id = "c-" + hex64(fnv1a64(basis + "#" + std::to_string(salt)));
    }
    used.insert(id);
    c.cluster_id = std::move(id);
  }
}

}  // namespace fcaccel::clustering
