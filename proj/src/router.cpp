#include "fcaccel/router.hpp"

#include <algorithm>
#include <set>

#include "fcaccel/error.hpp"

namespace fcaccel::router {

using clustering::LabelKind;

void RouterThresholds::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(exact_match) || !in_unit(centroid)) fail(ErrorCode::kInvalidInput, "router thresholds must be in (0, 1]");
  if (!(margin >= 0.0 && margin < 2.0)) fail(ErrorCode::kInvalidInput, "router margin must be in [0, 2)");
  if (deadline.count() <= 0) fail(ErrorCode::kInvalidInput, "routing deadline must be positive");
}

bool RoutingTable::is_complex_template(const std::string& pattern) const {
  return std::binary_search(complex_templates_.begin(), complex_templates_.end(), pattern);
}

std::optional<std::size_t> RoutingTable::entry_for_template(const std::string& pattern) const {
  auto it = template_index_.find(pattern);
  if (it == template_index_.end()) return std::nullopt;
  return it->second;
}

RoutingTable::Best RoutingTable::best_exemplar(std::span<const double> query) const {
  Best best;
  const std::size_t d = dimension_;
  for (std::size_t row = 0; row < exemplar_owner_.size(); ++row) {
    const double s = embedding::dot(query, std::span<const double>(exemplar_matrix_.data() + row * d, d));
    if (s > best.score) best = {s, exemplar_owner_[row]};
  }
  return best;
}

std::pair<RoutingTable::Best, RoutingTable::Best> RoutingTable::best_centroids(std::span<const double> query) const {
  const std::size_t d = dimension_;
  std::vector<double> scores(entries_.size());
  Best best;
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    scores[e] = embedding::dot(query, std::span<const double>(centroid_matrix_.data() + e * d, d));
    if (scores[e] > best.score) best = {scores[e], e};
  }
  Best rival;
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    if (entries_[e].dominant_function == entries_[best.entry].dominant_function) continue;
    if (scores[e] > rival.score) rival = {scores[e], e};
  }
  return {best, rival};
}

RoutingTable build_routing_table(std::span<const clustering::QueryCluster> clusters, std::string snapshot_id,
                                 std::string vectorizer_name, const TableOptions& options,
                                 std::vector<std::string>* diagnostics) {
  options.thresholds.validate();
  RoutingTable t;
  t.snapshot_id_ = std::move(snapshot_id);
  t.vectorizer_name_ = std::move(vectorizer_name);
  t.thresholds_ = options.thresholds;
  auto note = [&](std::string msg) {
    if (diagnostics) diagnostics->push_back(std::move(msg));
  };

  std::vector<const clustering::QueryCluster*> simple;
  std::set<std::string> complex;
  std::map<std::string, std::set<std::string>> functions_by_template;
  for (const auto& c : clusters) {
    if (c.members.empty()) continue;
    if (t.dimension_ == 0) t.dimension_ = c.centroid.dimension();
    if (c.centroid.dimension() != t.dimension_) fail(ErrorCode::kInvalidInput, "routing table: dimension mismatch");
    switch (c.label.kind) {
      case LabelKind::kComplex:
        for (const auto& tmpl : c.templates()) complex.insert(tmpl.pattern);
        break;
      case LabelKind::kSimple:
        simple.push_back(&c);
        for (const auto& tmpl : c.templates()) functions_by_template[tmpl.pattern].insert(c.label.dominant_function);
        break;
      case LabelKind::kUnlabeled:
        note("cluster " + c.cluster_id + " is unlabeled; skipped");
        break;
    }
  }
  for (const auto& [pattern, functions] : functions_by_template) {
    if (functions.size() > 1) {
      complex.insert(pattern);
      note("template '" + pattern + "' maps to several functions; treated as complex");
    }
  }
  t.complex_templates_.assign(complex.begin(), complex.end());

  std::sort(simple.begin(), simple.end(), [](const auto* a, const auto* b) { return a->cluster_id < b->cluster_id; });
  for (const auto* c : simple) {
    SimpleEntry e;
    e.cluster_id = c->cluster_id;
    e.dominant_function = c->label.dominant_function;
    e.centroid = c->centroid;
    std::vector<const clustering::ClusterMember*> members;
    for (const auto& m : c->members) members.push_back(&m);
    std::sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      if (a->weight() != b->weight()) return a->weight() > b->weight();
      return a->group.query_text < b->group.query_text;
    });
    if (members.size() > options.max_exemplars_per_cluster) members.resize(options.max_exemplars_per_cluster);
    for (const auto* m : members) {
      if (m->embedding.dimension() != t.dimension_) fail(ErrorCode::kInvalidInput, "routing table: dimension mismatch");
      e.exemplars.push_back(m->embedding);
    }
    for (const auto& tmpl : c->templates()) {
      if (!complex.contains(tmpl.pattern)) e.templates.push_back(tmpl.pattern);
    }
    t.entries_.push_back(std::move(e));
  }
  if (t.entries_.empty()) note("no simple clusters; every query will fall back to the large model");

  for (std::size_t i = 0; i < t.entries_.size(); ++i) {
    const auto& e = t.entries_[i];
    for (const auto& p : e.templates) t.template_index_.try_emplace(p, i);
    t.centroid_matrix_.insert(t.centroid_matrix_.end(), e.centroid.values().begin(), e.centroid.values().end());
    for (const auto& x : e.exemplars) {
      t.exemplar_matrix_.insert(t.exemplar_matrix_.end(), x.values().begin(), x.values().end());
      t.exemplar_owner_.push_back(i);
    }
  }
  return t;
}

std::string_view to_string(Route route) { return route == Route::kSmall ? "small" : "large"; }

std::string_view to_string(Reason reason) {
  switch (reason) {
    case Reason::kTemplateMatch: return "template_match";
    case Reason::kExemplarMatch: return "exemplar_match";
    case Reason::kCentroidMatch: return "centroid_match";
    case Reason::kNoMatch: return "no_match";
    case Reason::kComplexTemplate: return "complex_template";
    case Reason::kBelowMargin: return "below_margin";
    case Reason::kVectorizerError: return "vectorizer_error";
    case Reason::kDeadlineExceeded: return "deadline_exceeded";
  }
  return "no_match";
}

namespace {

RoutingDecision route_unchecked(std::string_view query, const RoutingTable& table,
                                const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict) {
  RoutingDecision d;
  const auto canonical = corpus::canonicalize_query(query);
  if (canonical.empty()) return d;

  d.spans = ner::extract_entities(canonical, dict);
  d.query_template = ner::templatize(canonical, d.spans).pattern;

  if (table.is_complex_template(d.query_template)) {
    d.reason = Reason::kComplexTemplate;
    return d;
  }
  auto small = [&](Reason reason, std::size_t entry, std::optional<double> score) {
    const auto& e = table.entries()[entry];
    d.route = Route::kSmall;
    d.reason = reason;
    d.matched_cluster = e.cluster_id;
    d.matched_function = e.dominant_function;
    d.score = score;
    return d;
  };
  if (auto entry = table.entry_for_template(d.query_template)) return small(Reason::kTemplateMatch, *entry, 1.0);
  if (table.entries().empty()) return d;

  embedding::EmbeddingVector v;
  try {
    if (vectorizer.info().name != table.vectorizer_name() || vectorizer.info().dimension != table.dimension()) {
      fail(ErrorCode::kInvalidInput, "vectorizer does not match routing table");
    }
    v = embedding::embed(canonical, vectorizer);
  } catch (const std::exception&) {
    d.reason = Reason::kVectorizerError;
    return d;
  }

  const auto& th = table.thresholds();
  const auto exemplar = table.best_exemplar(v.values());
  if (exemplar.score >= th.exact_match) return small(Reason::kExemplarMatch, exemplar.entry, exemplar.score);

  const auto [best, rival] = table.best_centroids(v.values());
  d.score = best.score;
  if (best.score >= th.centroid) {
    if (best.score - rival.score >= th.margin) return small(Reason::kCentroidMatch, best.entry, best.score);
    d.reason = Reason::kBelowMargin;
    return d;
  }
  return d;
}

}  // namespace

RoutingDecision match_query(std::string_view query, std::size_t /*history_length*/, const RoutingTable& table,
                            const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict,
                            bool enforce_deadline) {
  const auto start = std::chrono::steady_clock::now();
  RoutingDecision d;
  try {
    d = route_unchecked(query, table, vectorizer, dict);
  } catch (const std::exception&) {
    d = RoutingDecision{};
  }
  const auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  d.elapsed_us = elapsed.count();
  if (enforce_deadline && elapsed > table.thresholds().deadline && d.route == Route::kSmall) {
    d.route = Route::kLarge;
    d.reason = Reason::kDeadlineExceeded;
    d.matched_cluster.reset();
    d.matched_function.reset();
  }
  return d;
}

ordered_json to_json(const RoutingDecision& decision) {
  ordered_json j;
  j["route"] = to_string(decision.route);
  j["reason"] = to_string(decision.reason);
  j["matched_cluster"] = decision.matched_cluster ? ordered_json(*decision.matched_cluster) : ordered_json(nullptr);
  j["matched_function"] = decision.matched_function ? ordered_json(*decision.matched_function) : ordered_json(nullptr);
  j["score"] = decision.score ? ordered_json(*decision.score) : ordered_json(nullptr);
  j["elapsed_us"] = decision.elapsed_us;
  j["template"] = decision.query_template;
  return j;
}

std::string decision_log_line(std::string_view query, const RoutingDecision& decision) {
  ordered_json j;
  j["query_hash"] = hex64(fnv1a64(query));
  j["route"] = to_string(decision.route);
  j["reason"] = to_string(decision.reason);
  j["score"] = decision.score ? ordered_json(*decision.score) : ordered_json(nullptr);
  j["elapsed_us"] = decision.elapsed_us;
  return j.dump();
}

}  // namespace fcaccel::router
