#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "fcaccel/clustering.hpp"
#include "fcaccel/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fcaccel;
using namespace fcaccel::clustering;
using embedding::EmbeddingVector;

namespace {

ClusterMember member(const std::string& text, std::vector<double> v, std::size_t records,
                     const std::string& fn = "control") {
  ClusterMember m;
  m.group.query_text = text;
  for (std::size_t i = 0; i < records; ++i) {
    m.group.records.push_back(fixtures::make_record(text + "#" + std::to_string(i), text, fn, {{"command", "Pause"}},
                                                    static_cast<std::int64_t>(i)));
  }
  m.group.rebuild_histogram();
  m.embedding = EmbeddingVector::normalized(std::move(v));
  m.templates = {{text, {}}};
  return m;
}

std::vector<std::vector<std::string>> texts_of(const std::vector<QueryCluster>& clusters) {
  std::vector<std::vector<std::string>> out;
  for (const auto& c : clusters) {
    std::vector<std::string> t;
    for (const auto& m : c.members) t.push_back(m.group.query_text);
    out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ClusteringConfig small_config() {
  ClusteringConfig c;
  c.batch_size = 100;
  return c;
}

}  // namespace

TEST_CASE("average linkage matches the brute-force oracle") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> taus(0.2, 0.95);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    const auto items = oracles::clustered_vectors(rng, n, 2 + uniform_index(rng, 5));
    const double tau = taus(rng);
    CHECK(average_linkage_partition(items, tau) == oracles::average_linkage(items, tau));
  }
}

TEST_CASE("average linkage uses the mean, not the maximum, of cross similarities") {
  // a~b close, c close to b but far from a: single linkage would chain c in.
  const std::vector<EmbeddingVector> items = {
      EmbeddingVector::normalized({1.0, 0.0}),
      EmbeddingVector::normalized({std::cos(0.4), std::sin(0.4)}),
      EmbeddingVector::normalized({std::cos(0.8), std::sin(0.8)}),
  };
  // cos(0.4) = 0.921, cos(0.8) = 0.697; after {a,b}: mean(0.697, 0.921) = 0.809
  const auto parts = average_linkage_partition(items, 0.85);
  CHECK(parts == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
  CHECK(average_linkage_partition(items, 0.80).size() == 1);
}

TEST_CASE("threshold edge cases") {
  const std::vector<EmbeddingVector> same = {EmbeddingVector::normalized({1.0, 0.0}),
                                             EmbeddingVector::normalized({1.0, 0.0})};
  CHECK(average_linkage_partition(same, 1.0).size() == 1);
  CHECK(average_linkage_partition({}, 0.5).empty());
  CHECK_THROWS_AS(average_linkage_partition(same, 0.0), Error);
  CHECK_THROWS_AS(average_linkage_partition(same, 1.5), Error);
  const std::vector<EmbeddingVector> mixed = {EmbeddingVector::normalized({1.0, 0.0}),
                                              EmbeddingVector::normalized({1.0, 0.0, 0.0})};
  CHECK_THROWS_AS(average_linkage_partition(mixed, 0.5), Error);
}

TEST_CASE("centroid is the record-weighted mean, re-normalized") {
  const std::vector<ClusterMember> members = {member("a", {1, 0, 0}, 3), member("b", {0, 1, 0}, 1)};
  const auto c = compute_centroid(members);
  // (3, 1, 0) / sqrt(10)
  CHECK(c.values()[0] == doctest::Approx(3.0 / std::sqrt(10.0)));
  CHECK(c.values()[1] == doctest::Approx(1.0 / std::sqrt(10.0)));
  CHECK(c.values()[2] == doctest::Approx(0.0));

  const std::vector<ClusterMember> three = {member("a", {1, 0, 0}, 2), member("b", {0, 0, 1}, 2),
                                            member("c", {0, 1, 0}, 1)};
  const auto d = compute_centroid(three);
  CHECK(d.values()[0] == doctest::Approx(2.0 / 3.0));
  CHECK(d.values()[1] == doctest::Approx(1.0 / 3.0));
  CHECK(d.values()[2] == doctest::Approx(2.0 / 3.0));

  const std::vector<ClusterMember> opposite = {member("a", {1, 0, 0}, 2), member("b", {-1, 0, 0}, 2)};
  try {
    compute_centroid(opposite);
    FAIL("expected degenerate centroid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateCentroid);
  }
}

TEST_CASE("cluster output is independent of input order") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto members = oracles::random_members(rng, 2 + uniform_index(rng, 10), 4, "q");
    const auto first = cluster(members, 0.7);
    std::shuffle(members.begin(), members.end(), rng);
    const auto second = cluster(members, 0.7);
    CHECK(oracles::dump(first) == oracles::dump(second));
    std::set<std::string> ids;
    for (const auto& c : first) {
      CHECK(ids.insert(c.cluster_id).second);
      CHECK(c.label.kind == LabelKind::kUnlabeled);
      std::size_t hist = 0;
      for (const auto& [_, n] : c.function_histogram) hist += n;
      CHECK(hist == c.record_count());
    }
  }
}

TEST_CASE("merging into an empty store only prunes") {
  std::mt19937_64 rng(8);
  const auto config = small_config();
  for (int trial = 0; trial < 50; ++trial) {
    const auto incoming = cluster(oracles::random_members(rng, 1 + uniform_index(rng, 10), 4, "q"), 0.8);
    std::vector<QueryCluster> pruned;
    for (const auto& c : incoming) pruned.push_back(prune(c, config));
    CHECK(oracles::dump(merge_batches({}, incoming, 0.8, config)) == oracles::dump(pruned));
    CHECK(oracles::dump(merge_batches(incoming, {}, 0.8, config)) == oracles::dump(pruned));
  }
}

TEST_CASE("merging a store with its own copy keeps the cluster count") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto store = cluster(oracles::random_members(rng, 1 + uniform_index(rng, 10), 4, "q"), 0.8);
    const auto merged = merge_batches(store, store, 0.8, small_config());
    std::vector<QueryCluster> pruned;
    for (const auto& c : store) pruned.push_back(prune(c, small_config()));
    CHECK(merged.size() == store.size());
    CHECK(texts_of(merged) == texts_of(pruned));
  }
}

TEST_CASE("combining batches conserves records and joins only across batches") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = cluster(oracles::random_members(rng, 1 + uniform_index(rng, 8), 3, "a"), 0.7);
    const auto b = cluster(oracles::random_members(rng, 1 + uniform_index(rng, 8), 3, "b"), 0.7);
    const auto combined = combine_batches(a, b, 0.7);
    CHECK(oracles::total_records(combined) == oracles::total_records(a) + oracles::total_records(b));
    CHECK(combined.size() >= std::max(a.size(), b.size()));
    CHECK(combined.size() <= a.size() + b.size());
    for (const auto& c : combined) {
      std::size_t from_a = 0, from_b = 0;
      for (const auto& m : c.members) (m.group.query_text[0] == 'a' ? from_a : from_b)++;
      // A joined cluster holds exactly one cluster from each side.
      if (from_a > 0 && from_b > 0) {
        CHECK(std::count_if(a.begin(), a.end(), [&](const QueryCluster& x) {
                return x.first_query() == c.members.front().group.query_text ||
                       std::any_of(c.members.begin(), c.members.end(),
                                   [&](const ClusterMember& m) { return m.group.query_text == x.first_query(); });
              }) == 1);
      }
    }
  }
}

TEST_CASE("merged clusters keep existing ids and lose their labels") {
  auto store = cluster({member("pause playback", {1, 0}, 3), member("play jazz", {0, 1}, 3)}, 0.9);
  REQUIRE(store.size() == 2);
  store[0].label = ClusterLabel::simple("control");
  store[1].label = ClusterLabel::simple("intentionRecommend");
  const auto old_ids = std::set<std::string>{store[0].cluster_id, store[1].cluster_id};
  const auto incoming = cluster({member("pause the music", {0.95, 0.31}, 2)}, 0.9);
  const auto merged = merge_batches(store, incoming, 0.9, small_config());
  REQUIRE(merged.size() == 2);
  for (const auto& c : merged) CHECK(old_ids.contains(c.cluster_id));
  const auto& joined = merged[0].members.size() == 2 ? merged[0] : merged[1];
  const auto& untouched = merged[0].members.size() == 2 ? merged[1] : merged[0];
  CHECK(joined.label.kind == LabelKind::kUnlabeled);
  CHECK(untouched.label == ClusterLabel::simple("intentionRecommend"));
  CHECK(joined.record_count() == 5);
}

TEST_CASE("pruning folds near-duplicates, caps queries, then caps records") {
  ClusteringConfig config = small_config();
  config.max_queries_per_cluster = 2;
  config.max_records_per_query = 3;
  config.near_duplicate_threshold = 0.98;
  QueryCluster c;
  c.members = {member("heavy", {1, 0, 0}, 4), member("heavy twin", {0.999, 0.01, 0}, 2),
               member("middle", {0.6, 0.8, 0}, 3), member("light", {0, 0.6, 0.8}, 1)};
  refresh(c);
  const auto p = prune(c, config);
  REQUIRE(p.members.size() == 2);
  CHECK(p.members[0].group.query_text == "heavy");
  CHECK(p.members[1].group.query_text == "middle");
  // heavy absorbed its twin (6 records) before the cap kept the 3 preferred.
  CHECK(p.members[0].group.records.size() == 3);
  CHECK(p.members[0].templates.size() == 2);
  CHECK(p.record_count() == 6);
  const auto& capped = p.members[0].group.records;
  CHECK(std::is_sorted(capped.begin(), capped.end(), corpus::preferred_over));
  // Pruning is idempotent.
  CHECK(oracles::dump({prune(p, config)}) == oracles::dump({p}));
}

TEST_CASE("batch size range is enforced unless small batches are allowed") {
  ClusteringConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 80000;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 79999;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(c.validate(true));
  c.batch_size = 100001;
  CHECK_THROWS_AS(c.validate(true), Error);
  c.batch_size = 1000;
  c.similarity_threshold = 0.0;
  CHECK_THROWS_AS(c.validate(true), Error);
}

TEST_CASE("cluster ids are content-derived and unique") {
  std::vector<QueryCluster> a(2), b(2);
  for (auto* list : {&a, &b}) {
    (*list)[0].members = {member("x", {1, 0}, 1)};
    (*list)[1].members = {member("x", {1, 0}, 1)};
    for (auto& c : *list) refresh(c);
    assign_cluster_ids(*list);
  }
  CHECK(a[0].cluster_id != a[1].cluster_id);
  CHECK(a[0].cluster_id == b[0].cluster_id);
  CHECK(a[1].cluster_id == b[1].cluster_id);
  CHECK(a[0].cluster_id.rfind("c-", 0) == 0);
}
