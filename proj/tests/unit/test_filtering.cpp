#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fcaccel/error.hpp"
#include "fcaccel/filtering.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fcaccel;
using namespace fcaccel::filtering;
using clustering::ClusterLabel;
using clustering::LabelKind;
using clustering::QueryCluster;

namespace {

const std::vector<std::string> kFunctions = {"audioSearch", "control", "intentionRecommend", "onlineSearch"};

corpus::Arguments args_for(const std::string& fn) {
  if (fn == "control") return {{"command", "Pause"}};
  if (fn == "intentionRecommend") return {{"intent", "jazz"}};
  if (fn == "onlineSearch") return {{"keyword", "news"}};
  return {{"media_type", "song"}};
}

// One cluster, members "q0".."qk", records with random functions.
QueryCluster random_cluster(std::mt19937_64& rng, const std::string& prefix, std::size_t max_members,
                            std::size_t max_records) {
  QueryCluster c;
  const auto members = 1 + uniform_index(rng, max_members);
  const auto bias = kFunctions[uniform_index(rng, kFunctions.size())];
  for (std::uint64_t m = 0; m < members; ++m) {
    clustering::ClusterMember cm;
    cm.group.query_text = prefix + std::to_string(m);
    const auto n = 1 + uniform_index(rng, max_records);
    for (std::uint64_t r = 0; r < n; ++r) {
      const auto& fn = uniform_index(rng, 10) < 8 ? bias : kFunctions[uniform_index(rng, kFunctions.size())];
      cm.group.records.push_back(fixtures::make_record(cm.group.query_text + "-" + std::to_string(r),
                                                       cm.group.query_text, fn, args_for(fn),
                                                       static_cast<std::int64_t>(uniform_index(rng, 50))));
    }
    cm.group.rebuild_histogram();
    cm.embedding = oracles::random_unit(rng, 3);
    cm.templates = {{cm.group.query_text, {}}};
    c.members.push_back(std::move(cm));
  }
  // Opposite vectors can cancel; retry with a fixed direction.
  try {
    clustering::refresh(c);
  } catch (const Error&) {
    for (auto& m : c.members) m.embedding = embedding::EmbeddingVector::normalized({1.0, 0.0, 0.0});
    clustering::refresh(c);
  }
  c.cluster_id = "c-" + prefix;
  return c;
}

// Counts from the raw records, label by the largest share.
ClusterLabel label_oracle(const QueryCluster& c, const FilterConfig& config) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& m : c.members) {
    for (const auto& r : m.group.records) {
      ++counts[r.called_function];
      ++total;
    }
  }
  if (total < config.min_cluster_records) return ClusterLabel::complex();
  for (const auto& [f, n] : counts) {
    if (static_cast<double>(n) >= config.dominance_threshold * static_cast<double>(total)) {
      return ClusterLabel::simple(f);
    }
  }
  return ClusterLabel::complex();
}

}  // namespace

TEST_CASE("dominance labeling agrees with a share oracle") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> thresholds(0.55, 1.0);
  int simple = 0, complex = 0;
  for (int trial = 0; trial < 400; ++trial) {
    FilterConfig config;
    config.dominance_threshold = thresholds(rng);
    config.min_cluster_records = uniform_index(rng, 8);
    const auto c = random_cluster(rng, "q", 4, 6);
    const auto label = classify_cluster(c, config);
    CHECK(label == label_oracle(c, config));
    (label.is_simple() ? simple : complex)++;
  }
  CHECK(simple > 40);
  CHECK(complex > 40);
}

TEST_CASE("labeling at the boundary share") {
  QueryCluster c;
  clustering::ClusterMember m;
  m.group.query_text = "Pause playback";
  for (int i = 0; i < 9; ++i) {
    m.group.records.push_back(fixtures::make_record("p" + std::to_string(i), m.group.query_text, "control",
                                                    args_for("control")));
  }
  m.group.records.push_back(fixtures::make_record("x", m.group.query_text, "onlineSearch", args_for("onlineSearch")));
  m.group.rebuild_histogram();
  m.embedding = embedding::EmbeddingVector::normalized({1.0, 0.0});
  c.members = {m};
  clustering::refresh(c);
  FilterConfig config;
  CHECK(classify_cluster(c, config) == ClusterLabel::simple("control"));  // 9/10 = 0.9
  config.dominance_threshold = 0.91;
  CHECK(classify_cluster(c, config).kind == LabelKind::kComplex);
  config.dominance_threshold = 0.9;
  config.min_cluster_records = 11;
  CHECK(classify_cluster(c, config).kind == LabelKind::kComplex);
  config.dominance_threshold = 0.5;
  CHECK_THROWS_AS(classify_cluster(c, config), Error);
}

TEST_CASE("simple clusters keep only dominant-function records") {
  std::mt19937_64 rng(23);
  FilterConfig config;
  config.dominance_threshold = 0.6;
  config.min_cluster_records = 1;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<QueryCluster> clusters = {random_cluster(rng, "a", 4, 6), random_cluster(rng, "b", 4, 6)};
    const auto before = clusters;
    const auto labeled = label_clusters(clusters, config);
    REQUIRE(labeled.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& c = labeled[i];
      if (!c.label.is_simple()) {
        CHECK(oracles::dump({c}) == oracles::dump({[&] {
                auto copy = before[i];
                copy.label = ClusterLabel::complex();
                return copy;
              }()}));
        continue;
      }
      std::size_t dominant_before = 0;
      for (const auto& m : before[i].members) {
        for (const auto& r : m.group.records) dominant_before += r.called_function == c.label.dominant_function;
      }
      CHECK(c.record_count() == dominant_before);
      CHECK(c.function_histogram.size() == 1);
      for (const auto& m : c.members) {
        CHECK(m.group.weight() > 0);
        for (const auto& r : m.group.records) CHECK(r.called_function == c.label.dominant_function);
      }
    }
  }
  QueryCluster unlabeled = random_cluster(rng, "z", 2, 2);
  CHECK_THROWS_AS(drop_nondominant(unlabeled), Error);
}

TEST_CASE("representative selection agrees with a full sort") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    corpus::QueryGroup g;
    g.query_text = "q";
    const auto n = 1 + uniform_index(rng, 8);
    for (std::uint64_t i = 0; i < n; ++i) {
      corpus::Arguments args;
      if (uniform_index(rng, 2)) args["creator_name"] = "Jay Chou";
      if (uniform_index(rng, 2)) args["media_name"] = "Rice";
      args["media_type"] = "song";
      g.records.push_back(fixtures::make_record("r" + std::to_string(uniform_index(rng, 100)), "q", "audioSearch", args,
                                                static_cast<std::int64_t>(uniform_index(rng, 3))));
    }
    auto sorted = g.records;
    std::sort(sorted.begin(), sorted.end(), corpus::preferred_over);
    CHECK(select_representative(g) == sorted.front());
  }
  CHECK_THROWS_AS(select_representative(corpus::QueryGroup{}), Error);
}

TEST_CASE("balanced sampling downsamples and supplements per function") {
  std::vector<QueryCluster> clusters;
  auto add = [&](const std::string& fn, std::size_t groups, std::size_t per_group) {
    QueryCluster c;
    for (std::size_t g = 0; g < groups; ++g) {
      clustering::ClusterMember m;
      m.group.query_text = fn + " query " + std::to_string(g);
      for (std::size_t r = 0; r < per_group; ++r) {
        m.group.records.push_back(fixtures::make_record(fn + "-" + std::to_string(g) + "-" + std::to_string(r),
                                                        m.group.query_text, fn, args_for(fn),
                                                        static_cast<std::int64_t>(r)));
      }
      m.group.rebuild_histogram();
      m.embedding = embedding::EmbeddingVector::normalized({1.0, 0.0});
      c.members.push_back(std::move(m));
    }
    clustering::refresh(c);
    c.cluster_id = "c-" + fn;
    c.label = ClusterLabel::simple(fn);
    clusters.push_back(std::move(c));
  };
  add("control", 30, 2);             // 30 groups, target 10: downsample
  add("intentionRecommend", 4, 3);   // 4 groups x 3 records, target 10: supplement
  add("onlineSearch", 2, 2);         // only 4 records available
  QueryCluster complex_cluster = clusters.front();
  complex_cluster.cluster_id = "c-complex";
  complex_cluster.label = ClusterLabel::complex();
  clusters.push_back(complex_cluster);

  FilterConfig config;
  config.per_function_target = 10;
  const auto a = balanced_sample(clusters, config, 42);
  const auto b = balanced_sample(clusters, config, 42);
  CHECK(a.examples == b.examples);

  std::map<std::string, std::vector<std::string>> by_fn;
  for (const auto& ex : a.examples) by_fn[ex.function_name].push_back(ex.source_record_id);
  REQUIRE(by_fn.size() == 3);
  CHECK(by_fn["control"].size() == 10);
  CHECK(by_fn["intentionRecommend"].size() == 10);
  CHECK(by_fn["onlineSearch"].size() == 4);
  REQUIRE(a.diagnostics.size() == 1);
  CHECK(a.diagnostics[0].find("onlineSearch") != std::string::npos);

  // Downsampled groups contribute their representative (latest record) once.
  std::set<std::string> groups;
  for (const auto& id : by_fn["control"]) {
    CHECK(id.ends_with("-1"));
    CHECK(groups.insert(id).second);
  }
  // Supplementing takes every representative first, never repeats a record.
  const auto& ir = by_fn["intentionRecommend"];
  CHECK(std::set<std::string>(ir.begin(), ir.end()).size() == ir.size());
  for (int g = 0; g < 4; ++g) {
    CHECK(std::count(ir.begin(), ir.end(), "intentionRecommend-" + std::to_string(g) + "-2") == 1);
  }

  const auto other_seed = balanced_sample(clusters, config, 43);
  CHECK(other_seed.examples != a.examples);

  config.dominance_threshold = 0.4;
  CHECK_THROWS_AS(balanced_sample(clusters, config, 42), Error);

  std::vector<QueryCluster> only_complex = {complex_cluster};
  const auto none = balanced_sample(only_complex, FilterConfig{}, 1);
  CHECK(none.examples.empty());
  CHECK(none.diagnostics.size() == 1);
}

TEST_CASE("training examples end with the instruction and response markers") {
  const auto r = fixtures::make_record("e1", "Pause playback", "control", {{"command", "Pause"}});
  const auto ex = make_example(r);
  CHECK(ex.prompt.ends_with("### Instruction:\nPause playback\n### Response:\n"));
  CHECK(ex.completion == R"({"name":"control","arguments":{"command":"Pause"}})");
  CHECK(ex.function_name == "control");
  CHECK(ex.source_record_id == "e1");
  PromptStyle elided;
  elided.elide_output_prefix = true;
  CHECK(make_example(r, elided).completion == R"("control","arguments":{"command":"Pause"}})");
}

TEST_CASE("holdout split is stable and near the requested fraction") {
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 4000; ++i) examples.push_back({"p", "c", "r" + std::to_string(i), "control"});
  const auto split = split_holdout(examples, 42, 0.05);
  CHECK(split.train.size() + split.holdout.size() == examples.size());
  CHECK(split.holdout.size() > 140);
  CHECK(split.holdout.size() < 260);

  auto reversed = examples;
  std::reverse(reversed.begin(), reversed.end());
  const auto again = split_holdout(reversed, 42, 0.05);
  std::set<std::string> h1, h2;
  for (const auto& e : split.holdout) h1.insert(e.source_record_id);
  for (const auto& e : again.holdout) h2.insert(e.source_record_id);
  CHECK(h1 == h2);

  CHECK(split_holdout(examples, 42, 0.0).holdout.empty());
  CHECK_THROWS_AS(split_holdout(examples, 42, 1.0), Error);
  CHECK_THROWS_AS(split_holdout(examples, 42, -0.1), Error);
}

TEST_CASE("serialized examples are one JSON object per line") {
  const std::vector<TrainingExample> examples = {{"p1", "c1", "r1", "control"}, {"p2", "c2", "r2", "audioSearch"}};
  const auto text = serialize_examples(examples);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  const auto first = ordered_json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("prompt") == "p1");
  CHECK(first.at("source_record_id") == "r1");
}
