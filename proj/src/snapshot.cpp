#include "fcaccel/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "fcaccel/error.hpp"

namespace fcaccel::clustering {

namespace {

[[noreturn]] void invalid(const std::string& why) { fail(ErrorCode::kValidation, "snapshot: " + why); }

ordered_json vector_json(const embedding::EmbeddingVector& v) {
  return ordered_json(std::vector<double>(v.values().begin(), v.values().end()));
}

embedding::EmbeddingVector vector_from_json(const ordered_json& j, std::size_t dimension) {
  if (!j.is_array()) invalid("embedding must be an array");
  auto values = j.get<std::vector<double>>();
  if (values.size() != dimension) invalid("embedding dimension mismatch");
  try {
    return embedding::EmbeddingVector::from_unit(std::move(values));
  } catch (const Error&) {
    invalid("embedding is not unit-norm");
  }
}

std::string label_string(const ClusterLabel& l) { return std::string(to_string(l.kind)); }

ClusterLabel label_from_json(const ordered_json& label, const ordered_json& dominant) {
  const auto tag = label.get<std::string>();
  if (tag == "unlabeled") return ClusterLabel::unlabeled();
  if (tag == "complex") return ClusterLabel::complex();
  if (tag == "simple") {
    if (!dominant.is_string() || dominant.get<std::string>().empty()) invalid("simple cluster needs dominant_function");
    return ClusterLabel::simple(dominant.get<std::string>());
  }
  invalid("unknown label '" + tag + "'");
}

const std::regex kSnapshotName(R"(snapshot-(\d+)\.json)");

}  // namespace

ordered_json to_json(const ner::QueryTemplate& t) {
  ordered_json j;
  j["pattern"] = t.pattern;
  j["slots"] = t.slots;
  return j;
}

ner::QueryTemplate template_from_json(const ordered_json& j) {
  ner::QueryTemplate t;
  t.pattern = j.at("pattern").get<std::string>();
  t.slots = j.at("slots").get<std::vector<std::string>>();
  return t;
}

ordered_json to_json(const Snapshot& snapshot) {
  ordered_json j;
  j["snapshot_id"] = snapshot.snapshot_id;
  j["vectorizer_name"] = snapshot.vectorizer_name;
  j["dimension"] = snapshot.dimension;
  ordered_json clusters = ordered_json::array();
  for (const auto& c : snapshot.clusters) {
    ordered_json cj;
    cj["cluster_id"] = c.cluster_id;
    cj["label"] = label_string(c.label);
    cj["dominant_function"] = c.label.is_simple() ? ordered_json(c.label.dominant_function) : ordered_json(nullptr);
    cj["centroid"] = vector_json(c.centroid);
    ordered_json templates = ordered_json::array();
    for (const auto& t : c.templates()) templates.push_back(to_json(t));
    cj["templates"] = std::move(templates);
    ordered_json members = ordered_json::array();
    for (const auto& m : c.members) {
      ordered_json mj;
      mj["query"] = m.group.query_text;
      mj["embedding"] = vector_json(m.embedding);
      ordered_json ids = ordered_json::array();
      for (const auto& r : m.group.records) ids.push_back(r.record_id);
      mj["record_ids"] = std::move(ids);
      ordered_json hist = ordered_json::object();
      for (const auto& [f, n] : m.group.function_histogram) hist[f] = n;
      mj["function_histogram"] = std::move(hist);
      ordered_json mt = ordered_json::array();
      for (const auto& t : m.templates) mt.push_back(to_json(t));
      mj["templates"] = std::move(mt);
      ordered_json records = ordered_json::array();
      for (const auto& r : m.group.records) records.push_back(corpus::to_json(r));
      mj["records"] = std::move(records);
      members.push_back(std::move(mj));
    }
    cj["members"] = std::move(members);
    clusters.push_back(std::move(cj));
  }
  j["clusters"] = std::move(clusters);
  return j;
}

Snapshot snapshot_from_json(const ordered_json& j) {
  Snapshot s;
  try {
    s.snapshot_id = j.at("snapshot_id").get<std::string>();
    s.vectorizer_name = j.at("vectorizer_name").get<std::string>();
    s.dimension = j.at("dimension").get<std::size_t>();
    for (const auto& cj : j.at("clusters")) {
      QueryCluster c;
      c.cluster_id = cj.at("cluster_id").get<std::string>();
      c.label = label_from_json(cj.at("label"), cj.value("dominant_function", ordered_json(nullptr)));
      std::vector<ner::QueryTemplate> cluster_templates;
      for (const auto& t : cj.at("templates")) cluster_templates.push_back(template_from_json(t));
      for (const auto& mj : cj.at("members")) {
        ClusterMember m;
        m.group.query_text = mj.at("query").get<std::string>();
        m.embedding = vector_from_json(mj.at("embedding"), s.dimension);
        for (auto it = mj.at("function_histogram").begin(); it != mj.at("function_histogram").end(); ++it) {
          m.group.function_histogram[it.key()] = it.value().get<std::size_t>();
        }
        if (auto it = mj.find("templates"); it != mj.end()) {
          for (const auto& t : *it) m.templates.push_back(template_from_json(t));
        }
        if (auto it = mj.find("records"); it != mj.end()) {
          for (const auto& r : *it) m.group.records.push_back(corpus::record_from_json(r));
          const auto stored = m.group.function_histogram;
          m.group.rebuild_histogram();
          if (stored != m.group.function_histogram) invalid("member histogram disagrees with its records");
        }
        c.members.push_back(std::move(m));
      }
      if (c.members.empty()) invalid("cluster '" + c.cluster_id + "' has no members");
      // Cluster-level templates with no member owner stay attached to the first member.
      std::vector<ner::QueryTemplate> owned;
      for (const auto& m : c.members) owned.insert(owned.end(), m.templates.begin(), m.templates.end());
      for (auto& t : cluster_templates) {
        if (std::find(owned.begin(), owned.end(), t) == owned.end()) c.members.front().templates.push_back(t);
      }
      for (auto& m : c.members) {
        std::sort(m.templates.begin(), m.templates.end());
        m.templates.erase(std::unique(m.templates.begin(), m.templates.end()), m.templates.end());
      }
      const auto stored_centroid = vector_from_json(cj.at("centroid"), s.dimension);
      refresh(c);
      for (std::size_t d = 0; d < s.dimension; ++d) {
        if (std::abs(stored_centroid.values()[d] - c.centroid.values()[d]) > embedding::kNormTolerance) {
          invalid("centroid of '" + c.cluster_id + "' does not match its members");
        }
      }
      s.clusters.push_back(std::move(c));
    }
  } catch (const ordered_json::exception& e) {
    invalid(e.what());
  }
  return s;
}

std::string compute_snapshot_id(const Snapshot& snapshot, std::string_view stage) {
  auto j = to_json(snapshot);
  j["snapshot_id"] = "";
  return std::string(stage) + "-" + hex64(fnv1a64(j.dump()));
}

std::string serialize_snapshot(const Snapshot& snapshot) { return to_json(snapshot).dump(1) + "\n"; }

Snapshot load_snapshot(const std::filesystem::path& path_or_dir) {
  const auto path = resolve_snapshot(path_or_dir);
  const auto text = read_file(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    invalid(path.string() + ": " + e.what());
  }
  return snapshot_from_json(j);
}

void save_snapshot(const std::filesystem::path& path, const Snapshot& snapshot) {
  write_file_atomic(path, serialize_snapshot(snapshot));
}

std::filesystem::path resolve_snapshot(const std::filesystem::path& path_or_dir) {
  if (!std::filesystem::is_directory(path_or_dir)) return path_or_dir;
  std::filesystem::path newest;
  long long newest_seq = -1;
  for (const auto& entry : std::filesystem::directory_iterator(path_or_dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (!std::regex_match(name, m, kSnapshotName)) continue;
    const long long seq = std::stoll(m[1].str());
    if (seq > newest_seq) {
      newest_seq = seq;
      newest = entry.path();
    }
  }
  if (newest.empty()) fail(ErrorCode::kIo, "no snapshot in " + path_or_dir.string());
  return newest;
}

std::filesystem::path next_snapshot_path(const std::filesystem::path& dir) {
  long long next = 1;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      std::smatch m;
      const auto name = entry.path().filename().string();
      if (std::regex_match(name, m, kSnapshotName)) next = std::max(next, std::stoll(m[1].str()) + 1);
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snapshot-%06lld.json", next);
  return dir / buf;
}

}  // namespace fcaccel::clustering
