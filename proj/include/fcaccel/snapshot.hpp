#pragma once

// Cluster store: one JSON document per snapshot, append-only files in a
// directory, newest wins.

#include <filesystem>
#include <string>
#include <vector>

#include "fcaccel/clustering.hpp"
#include "fcaccel/util.hpp"

namespace fcaccel::clustering {

struct Snapshot {
  std::string snapshot_id;
  std::string vectorizer_name;
  std::size_t dimension = 0;
  std::vector<QueryCluster> clusters;
};

ordered_json to_json(const ner::QueryTemplate& t);
ner::QueryTemplate template_from_json(const ordered_json& j);

ordered_json to_json(const Snapshot& snapshot);
// Validates unit norms, dimensions and the centroid invariant. Members
// stored without records keep their histograms. Throws kValidation.
Snapshot snapshot_from_json(const ordered_json& j);

// Content hash of the clusters; deterministic for identical clusters.
std::string compute_snapshot_id(const Snapshot& snapshot, std::string_view stage);

std::string serialize_snapshot(const Snapshot& snapshot);
// A directory loads its newest snapshot.
Snapshot load_snapshot(const std::filesystem::path& path_or_dir);
void save_snapshot(const std::filesystem::path& path, const Snapshot& snapshot);

// Snapshot files are named snapshot-NNNNNN.json. A path naming a directory
// resolves to its newest snapshot; a file path is returned as is.
std::filesystem::path resolve_snapshot(const std::filesystem::path& path_or_dir);
std::filesystem::path next_snapshot_path(const std::filesystem::path& dir);

}  // namespace fcaccel::clustering
