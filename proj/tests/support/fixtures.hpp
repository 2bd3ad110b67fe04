#pragma once

// Shared test data: music-domain tool schemas, a deterministic synthetic
// traffic generator and a routing fixture built from hand-listed queries.

#include <cstdint>
#include <string>
#include <vector>

#include "fcaccel/clustering.hpp"
#include "fcaccel/corpus.hpp"
#include "fcaccel/embedding.hpp"
#include "fcaccel/ner.hpp"
#include "fcaccel/paramgen.hpp"
#include "fcaccel/router.hpp"
#include "fcaccel/snapshot.hpp"

namespace fixtures {

using fcaccel::corpus::FunctionCallRecord;
using fcaccel::corpus::ToolSchema;

// audioSearch, intentionRecommend, playerControl, control, onlineSearch.
std::vector<ToolSchema> music_tools();
const ToolSchema& tool(const std::string& name);

ToolSchema control_tool();  // control(command: enum, required)

// Search schema with multi-word parameter names.
ToolSchema long_name_search_tool();
fcaccel::paramgen::TokenMapping short_name_mapping();

std::vector<std::string> artists();
std::vector<std::string> genres();
// "surface\ttype" lines for every artist and genre.
std::string dictionary_tsv();
fcaccel::ner::EntityDictionary dictionary();

fcaccel::paramgen::KeywordTable keyword_table();

struct CorpusOptions {
  std::size_t records = 1000;
  std::uint64_t seed = 42;
  double complex_share = 0.2;
  std::size_t max_history = 4;
  // Share of simple queries with one character dropped. Drawn from a
  // separate stream, so the other fields are unaffected.
  double typo_share = 0.0;
};

// Same options give the same records in the same order.
std::vector<FunctionCallRecord> synthetic_corpus(const CorpusOptions& options);
std::string to_jsonl(const std::vector<FunctionCallRecord>& records);

FunctionCallRecord make_record(std::string id, std::string query, std::string function,
                               fcaccel::corpus::Arguments args, std::int64_t ts = 1000);

// Clusters listed by hand: three simple families, a control cluster for the
// "Pause playback" example and one mixed cluster per ambiguous query.
struct MusicFixture {
  std::vector<fcaccel::clustering::QueryCluster> clusters;
  fcaccel::ner::EntityDictionary dict;
  std::vector<std::pair<std::string, std::string>> simple_queries;  // query, function
  std::vector<std::string> complex_queries;
};

MusicFixture music_fixture();
fcaccel::router::RoutingTable music_table(const MusicFixture& f);
fcaccel::clustering::Snapshot music_snapshot(const MusicFixture& f);

// Replay traffic with a known split: `small` records cycle through the simple
// queries (template matches), `large` through the ambiguous ones.
std::vector<FunctionCallRecord> routed_traffic(const MusicFixture& f, std::size_t small, std::size_t large);

}  // namespace fixtures
