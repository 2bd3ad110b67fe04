#include "fcaccel/ner.hpp"

#include <algorithm>
#include <fstream>

#include "fcaccel/error.hpp"

namespace fcaccel::ner {

namespace {

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

void append_escaped(std::string& out, std::string_view literal) {
  for (char c : literal) {
    if (c == '<' || c == '\\') out += '\\';
    out += c;
  }
}

}  // namespace

const std::vector<std::string>& default_type_priority() {
  static const std::vector<std::string> kDefault = {"song", "artist", "genre", "movie"};
  return kDefault;
}

EntityDictionary::EntityDictionary(std::vector<std::string> type_priority)
    : type_priority_(std::move(type_priority)) {}

std::size_t EntityDictionary::rank(std::string_view type_tag) const {
  auto it = std::find(type_priority_.begin(), type_priority_.end(), type_tag);
  return static_cast<std::size_t>(it - type_priority_.begin());
}

bool EntityDictionary::add(std::string_view surface, std::string_view type_tag) {
  const auto canonical = corpus::canonicalize_query(surface);
  if (canonical.empty()) fail(ErrorCode::kInvalidInput, "empty dictionary surface");
  if (type_tag.empty()) fail(ErrorCode::kInvalidInput, "empty entity type");
  if (rank(type_tag) == type_priority_.size()) type_priority_.emplace_back(type_tag);

  auto [it, inserted] = entries_.try_emplace(canonical, type_tag);
  if (inserted) {
    max_surface_bytes_ = std::max(max_surface_bytes_, canonical.size());
    return true;
  }
  if (it->second == type_tag) return true;
  if (rank(type_tag) < rank(it->second)) it->second = std::string(type_tag);
  return false;
}

void load_dictionary_stream(std::istream& in, const std::string& source_name, DictionaryLoad& into) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      into.diagnostics.push_back({line_no, source_name + ": missing TAB separator"});
      continue;
    }
    const auto surface = trim(std::string_view(line).substr(0, tab));
    const auto tag = trim(std::string_view(line).substr(tab + 1));
    if (surface.empty() || tag.empty() || tag.find('\t') != std::string_view::npos) {
      into.diagnostics.push_back({line_no, source_name + ": malformed entry"});
      continue;
    }
    const auto canonical = corpus::canonicalize_query(surface);
    const auto existing = into.dictionary.entries().find(canonical);
    const std::string previous = existing == into.dictionary.entries().end() ? "" : existing->second;
    if (!into.dictionary.add(surface, tag)) {
      into.diagnostics.push_back({line_no, source_name + ": conflicting types for '" + canonical + "' (" +
                                               previous + " vs " + std::string(tag) + "), kept " +
                                               into.dictionary.entries().find(canonical)->second});
    }
  }
  if (in.bad()) fail(ErrorCode::kIo, "read error on " + source_name);
}

DictionaryLoad load_dictionaries(std::span<const std::filesystem::path> sources,
                                 std::vector<std::string> type_priority) {
  DictionaryLoad load{EntityDictionary(std::move(type_priority)), {}};
  for (const auto& path : sources) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open dictionary " + path.string());
    load_dictionary_stream(in, path.string(), load);
  }
  return load;
}

std::vector<EntitySpan> extract_entities(std::string_view query, const EntityDictionary& dict) {
  std::vector<EntitySpan> spans;
  if (dict.empty()) return spans;
  const auto& entries = dict.entries();
  std::size_t pos = 0;
  while (pos < query.size()) {
    if (is_continuation(query[pos])) {
      ++pos;
      continue;
    }
    const std::size_t longest = std::min(dict.max_surface_bytes(), query.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len > 0; --len) {
      const std::size_t end = pos + len;
      if (end < query.size() && is_continuation(query[end])) continue;
      auto it = entries.find(query.substr(pos, len));
      if (it == entries.end()) continue;
      spans.push_back({pos, end, it->first, it->second});
      pos = end;
      matched = true;
      break;
    }
    if (!matched) ++pos;
  }
  return spans;
}

QueryTemplate templatize(std::string_view query, std::span<const EntitySpan> spans) {
  std::vector<const EntitySpan*> ordered;
  ordered.reserve(spans.size());
  for (const auto& s : spans) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const EntitySpan* a, const EntitySpan* b) { return a->start < b->start; });

  QueryTemplate t;
  std::size_t cursor = 0;
  for (const EntitySpan* s : ordered) {
    if (s->start >= s->end || s->end > query.size()) fail(ErrorCode::kInvalidInput, "entity span out of bounds");
    if (s->start < cursor) fail(ErrorCode::kInvalidInput, "overlapping entity spans");
    if (query.substr(s->start, s->end - s->start) != s->surface) {
      fail(ErrorCode::kInvalidInput, "entity span surface does not match query");
    }
    if (s->type_tag.empty() || s->type_tag.find_first_of("<>") != std::string::npos) {
      fail(ErrorCode::kInvalidInput, "invalid entity type tag");
    }
    append_escaped(t.pattern, query.substr(cursor, s->start - cursor));
    t.pattern += '<';
    t.pattern += s->type_tag;
    t.pattern += '>';
    t.slots.push_back(s->type_tag);
    cursor = s->end;
  }
  append_escaped(t.pattern, query.substr(cursor));
  return t;
}

std::string instantiate(const QueryTemplate& tmpl, std::span<const std::string> surfaces) {
  if (surfaces.size() != tmpl.slots.size()) fail(ErrorCode::kInvalidInput, "surface count does not match slots");
  std::string out;
  std::size_t slot = 0;
  const std::string& p = tmpl.pattern;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == '\\' && i + 1 < p.size()) {
      out += p[++i];
    } else if (p[i] == '<') {
      const auto close = p.find('>', i);
      if (close == std::string::npos || slot >= tmpl.slots.size() ||
          p.compare(i + 1, close - i - 1, tmpl.slots[slot]) != 0) {
        fail(ErrorCode::kInvalidInput, "template placeholders do not match slots");
      }
      out += surfaces[slot++];
      i = close;
    } else {
      out += p[i];
    }
  }
  if (slot != tmpl.slots.size()) fail(ErrorCode::kInvalidInput, "template has unused slots");
  return out;
}

QueryTemplate template_of(std::string_view canonical_query, const EntityDictionary& dict) {
  const auto spans = extract_entities(canonical_query, dict);
  return templatize(canonical_query, spans);
}

}  // namespace fcaccel::ner
