#include "fixtures.hpp"

#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fcaccel/filtering.hpp"
#include "fcaccel/util.hpp"

namespace fixtures {

using fcaccel::corpus::ParamSpec;
using fcaccel::corpus::ParamType;
using fcaccel::corpus::Arguments;
namespace clustering = fcaccel::clustering;

namespace {

ParamSpec param(std::string name, ParamType type, bool required, std::vector<std::string> values = {}) {
  return {std::move(name), type, required, std::move(values)};
}

struct Pattern {
  std::string text;  // "{}" marks the slot
  std::string function;
};

std::string fill(const std::string& pattern, const std::string& value) {
  auto pos = pattern.find("{}");
  if (pos == std::string::npos) return pattern;
  return pattern.substr(0, pos) + value + pattern.substr(pos + 2);
}

}  // namespace

std::vector<ToolSchema> music_tools() {
  return {
      {"audioSearch", "Search and play audio",
       {param("media_type", ParamType::kEnum, false, {"song", "album", "playlist"}),
        param("creator_name", ParamType::kString, false), param("media_name", ParamType::kString, false)}},
      {"intentionRecommend", "Recommend music for an intent", {param("intent", ParamType::kString, true)}},
      {"playerControl", "Change playback state", {param("action", ParamType::kEnum, true, {"stop", "skip"})}},
      control_tool(),
      {"onlineSearch", "Search the web", {param("keyword", ParamType::kString, true)}},
  };
}

const ToolSchema& tool(const std::string& name) {
  static const auto tools = music_tools();
  for (const auto& t : tools) {
    if (t.name == name) return t;
  }
  throw std::out_of_range(name);
}

ToolSchema control_tool() {
  return {"control", "Player control",
          {param("command", ParamType::kEnum, true, {"Pause", "Play", "Next", "Previous", "Stop"})}};
}

ToolSchema long_name_search_tool() {
  return {"audioSearch", "",
          {param("media_type", ParamType::kString, false), param("creator_name", ParamType::kString, false),
           param("media_name", ParamType::kString, false)}};
}

fcaccel::paramgen::TokenMapping short_name_mapping() {
  return fcaccel::paramgen::TokenMapping(
      {{"media_type", "type"}, {"creator_name", "creator"}, {"media_name", "media"}});
}

std::vector<std::string> artists() {
  return {"Jay Chou", "Fenghuang Legend", "Faye Wong", "Eason Chan", "Teresa Teng", "Mayday"};
}

std::vector<std::string> genres() { return {"jazz", "rock", "folk", "blues", "classical"}; }

std::string dictionary_tsv() {
  std::string out = "# artists\n";
  for (const auto& a : artists()) out += a + "\tartist\n";
  out += "# genres\n";
  for (const auto& g : genres()) out += g + "\tgenre\n";
  return out;
}

fcaccel::ner::EntityDictionary dictionary() {
  fcaccel::ner::EntityDictionary d;
  for (const auto& a : artists()) d.add(a, "artist");
  for (const auto& g : genres()) d.add(g, "genre");
  return d;
}

fcaccel::paramgen::KeywordTable keyword_table() {
  fcaccel::paramgen::KeywordTable t;
  t.entries["control"]["command"] = {
      {"pause", "Pause"}, {"resume", "Play"}, {"next", "Next"}, {"previous", "Previous"}, {"halt", "Stop"}};
  t.entries["playerControl"]["action"] = {{"don't", "stop"}, {"stop", "stop"}, {"skip", "skip"}};
  t.entries["audioSearch"]["media_type"] = {{"song", "song"}, {"album", "album"}};
  return t;
}

FunctionCallRecord make_record(std::string id, std::string query, std::string function, Arguments args,
                               std::int64_t ts) {
  FunctionCallRecord r;
  r.record_id = std::move(id);
  r.query = std::move(query);
  r.tools = music_tools();
  r.called_function = std::move(function);
  r.arguments = std::move(args);
  r.timestamp_ms = ts;
  return r;
}

std::vector<FunctionCallRecord> synthetic_corpus(const CorpusOptions& options) {
  std::mt19937_64 rng(options.seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(fcaccel::uniform_index(rng, n)); };
  auto chance = [&](double p) { return static_cast<double>(pick(1'000'000)) < p * 1e6; };
  std::mt19937_64 typo_rng(options.seed ^ 0x7970u);

  const std::vector<Pattern> artist_patterns = {{"Play {}'s songs", "audioSearch"},
                                                {"Play some music by {}", "audioSearch"},
                                                {"Play a song by {}", "audioSearch"},
                                                {"Help me play a song by {}", "audioSearch"}};
  const std::vector<Pattern> genre_patterns = {{"I want to listen to some {}", "intentionRecommend"},
                                               {"Give me some {} music", "intentionRecommend"},
                                               {"Recommend {} songs", "intentionRecommend"},
                                               {"I'm into {} lately, recommend more to me", "intentionRecommend"}};
  const std::vector<std::pair<std::string, std::string>> controls = {
      {"Pause playback", "Pause"}, {"Pause the music", "Pause"}, {"Resume the music", "Play"},
      {"Next song please", "Next"}, {"Previous track", "Previous"}};
  const std::vector<std::string> refusals = {"I don't want to listen", "Don't listen", "Stop, I don't want to listen"};
  const std::vector<std::string> ambiguous = {"Switch", "Change", "More of these", "Don't want to listen"};
  const std::vector<std::string> ambiguous_targets = {"playerControl", "intentionRecommend", "onlineSearch"};
  const auto art = artists();
  const auto gen = genres();

  std::vector<FunctionCallRecord> out;
  out.reserve(options.records);
  for (std::size_t i = 0; i < options.records; ++i) {
    std::ostringstream id;
    id << "r" << std::setfill('0') << std::setw(6) << i;
    std::string query, function;
    Arguments args;
    if (chance(options.complex_share)) {
      query = ambiguous[pick(ambiguous.size())];
      function = ambiguous_targets[pick(ambiguous_targets.size())];
      if (function == "playerControl") args["action"] = "skip";
      if (function == "intentionRecommend") args["intent"] = gen[pick(gen.size())];
      if (function == "onlineSearch") args["keyword"] = query;
    } else {
      switch (pick(4)) {
        case 0: {
          const auto& p = artist_patterns[pick(artist_patterns.size())];
          const auto& a = art[pick(art.size())];
          query = fill(p.text, a);
          function = p.function;
          args["creator_name"] = a;
          if (query.find("song") != std::string::npos) args["media_type"] = "song";
          break;
        }
        case 1: {
          const auto& p = genre_patterns[pick(genre_patterns.size())];
          const auto& g = gen[pick(gen.size())];
          query = fill(p.text, g);
          function = p.function;
          args["intent"] = g;
          break;
        }
        case 2: {
          const auto& [q, command] = controls[pick(controls.size())];
          query = q;
          function = "control";
          args["command"] = command;
          break;
        }
        default:
          query = refusals[pick(refusals.size())];
          function = "playerControl";
          args["action"] = "stop";
          break;
      }
      if (options.typo_share > 0 && fcaccel::uniform_index(typo_rng, 1'000'000) < options.typo_share * 1e6) {
        std::size_t at = 1 + fcaccel::uniform_index(typo_rng, query.size() - 1);
        if (query[at] == ' ') --at;
        query.erase(at, 1);
      }
      // A little label noise, as in real traffic.
      if (chance(0.03)) {
        function = "onlineSearch";
        args = {{"keyword", query}};
      }
    }
    auto r = make_record(id.str(), query, function, args, 1'700'000'000'000 + static_cast<std::int64_t>(i) * 1000);
    const std::size_t turns = pick(options.max_history + 1);
    for (std::size_t t = 0; t < turns; ++t) {
      using fcaccel::corpus::Role;
      r.history.push_back({t % 2 == 0 ? Role::kUser : Role::kAssistant, "turn " + std::to_string(t)});
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_jsonl(const std::vector<FunctionCallRecord>& records) {
  return fcaccel::corpus::serialize_records(records);
}

MusicFixture music_fixture() {
  MusicFixture f;
  f.dict = fcaccel::ner::EntityDictionary();
  f.dict.add("Jay Chou", "artist");
  f.dict.add("Fenghuang Legend", "artist");

  struct Family {
    std::string function;
    std::vector<std::pair<std::string, Arguments>> queries;
  };
  const std::vector<Family> simple = {
      {"audioSearch",
       {{"Play Jay Chou's songs", {{"creator_name", "Jay Chou"}, {"media_type", "song"}}},
        {"Play some music by Jay Chou", {{"creator_name", "Jay Chou"}}},
        {"Help me play a song by Fenghuang Legend", {{"creator_name", "Fenghuang Legend"}, {"media_type", "song"}}},
        {"Play me a song by Fenghuang Legend", {{"creator_name", "Fenghuang Legend"}, {"media_type", "song"}}},
        {"Play a song by Fenghuang Legend", {{"creator_name", "Fenghuang Legend"}, {"media_type", "song"}}}}},
      {"intentionRecommend",
       {{"I want to listen to some jazz", {{"intent", "jazz"}}},
        {"Give me some jazz music", {{"intent", "jazz"}}},
        {"I'm into jazz lately, recommend more to me", {{"intent", "jazz"}}},
        {"Recommend jazz songs", {{"intent", "jazz"}}},
        {"Give me some jazz", {{"intent", "jazz"}}}}},
      {"playerControl",
       {{"I don't want to listen", {{"action", "stop"}}},
        {"Don't listen", {{"action", "stop"}}},
        {"Stop, I don't want to listen", {{"action", "stop"}}}}},
      {"control", {{"Pause playback", {{"command", "Pause"}}}}},
  };
  const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Arguments>>>> complex = {
      {"Switch/change", {{"playerControl", {{"action", "skip"}}}, {"intentionRecommend", {{"intent", "jazz"}}}}},
      {"More of these", {{"onlineSearch", {{"keyword", "more"}}}, {"intentionRecommend", {{"intent", "jazz"}}}}},
      {"Don't want to listen", {{"playerControl", {{"action", "stop"}}}, {"control", {{"command", "Stop"}}}}},
  };

  int next_id = 0;
  auto records_for = [&](const std::string& q, const std::string& fn, const Arguments& args, int n) {
    std::vector<FunctionCallRecord> out;
    for (int i = 0; i < n; ++i) {
      out.push_back(make_record("p" + std::to_string(next_id++), q, fn, args, 1000 + next_id));
    }
    return out;
  };
  auto member_for = [&](std::vector<FunctionCallRecord> records) {
    clustering::ClusterMember m;
    m.group = fcaccel::corpus::group_by_query(records).front();
    m.embedding = fcaccel::embedding::builtin_vectorize(m.group.query_text);
    m.templates = {fcaccel::ner::template_of(m.group.query_text, f.dict)};
    return m;
  };

  for (const auto& fam : simple) {
    clustering::QueryCluster c;
    for (const auto& [q, args] : fam.queries) {
      c.members.push_back(member_for(records_for(q, fam.function, args, 5)));
      f.simple_queries.emplace_back(q, fam.function);
    }
    clustering::refresh(c);
    f.clusters.push_back(std::move(c));
  }
  for (const auto& [q, calls] : complex) {
    std::vector<FunctionCallRecord> records;
    for (const auto& [fn, args] : calls) {
      auto part = records_for(q, fn, args, 3);
      records.insert(records.end(), part.begin(), part.end());
    }
    clustering::QueryCluster c;
    c.members.push_back(member_for(std::move(records)));
    clustering::refresh(c);
    f.clusters.push_back(std::move(c));
    f.complex_queries.push_back(q);
  }
  clustering::assign_cluster_ids(f.clusters);
  f.clusters = fcaccel::filtering::label_clusters(std::move(f.clusters), fcaccel::filtering::FilterConfig{});
  return f;
}

fcaccel::router::RoutingTable music_table(const MusicFixture& f) {
  return fcaccel::router::build_routing_table(f.clusters, "music-fixture",
                                              fcaccel::embedding::HashedNgramVectorizer().info().name);
}

fcaccel::clustering::Snapshot music_snapshot(const MusicFixture& f) {
  fcaccel::clustering::Snapshot s;
  const fcaccel::embedding::HashedNgramVectorizer v;
  s.vectorizer_name = v.info().name;
  s.dimension = v.info().dimension;
  s.clusters = f.clusters;
  s.snapshot_id = fcaccel::clustering::compute_snapshot_id(s, "snap");
  return s;
}

std::vector<FunctionCallRecord> routed_traffic(const MusicFixture& f, std::size_t small, std::size_t large) {
  std::vector<FunctionCallRecord> out;
  for (std::size_t i = 0; i < small; ++i) {
    const auto& [q, fn] = f.simple_queries[i % f.simple_queries.size()];
    out.push_back(make_record("s" + std::to_string(i), q, fn, {}));
  }
  for (std::size_t i = 0; i < large; ++i) {
    out.push_back(make_record("l" + std::to_string(i), f.complex_queries[i % f.complex_queries.size()],
                              "onlineSearch", {{"keyword", "x"}}));
  }
  return out;
}

}  // namespace fixtures
