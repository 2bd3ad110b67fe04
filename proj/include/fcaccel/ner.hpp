#pragma once

// Dictionary (gazetteer) entity extraction and query templating.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcaccel/corpus.hpp"

namespace fcaccel::ner {

const std::vector<std::string>& default_type_priority();

class EntityDictionary {
 public:
  EntityDictionary() : EntityDictionary(default_type_priority()) {}
  explicit EntityDictionary(std::vector<std::string> type_priority);

  // Inserts a canonicalized surface. On a conflicting type the one earlier in
  // type_priority is kept; returns false in that case. Unknown tags are
  // appended to the priority list.
  bool add(std::string_view surface, std::string_view type_tag);

  const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& type_priority() const noexcept { return type_priority_; }
  std::size_t rank(std::string_view type_tag) const;  // lower is stronger
  std::size_t max_surface_bytes() const noexcept { return max_surface_bytes_; }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::vector<std::string> type_priority_;
  std::size_t max_surface_bytes_ = 0;
};

struct DictionaryLoad {
  EntityDictionary dictionary;
  std::vector<corpus::Diagnostic> diagnostics;
};

// Format: UTF-8, one "surface<TAB>type_tag" per line, '#' comments.
// Unreadable file -> Error(kIo); malformed lines -> diagnostic.
DictionaryLoad load_dictionaries(std::span<const std::filesystem::path> sources,
                                 std::vector<std::string> type_priority = default_type_priority());
void load_dictionary_stream(std::istream& in, const std::string& source_name, DictionaryLoad& into);

// Offsets are byte offsets into the UTF-8 query, always on code point boundaries.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;
  std::string type_tag;

  bool operator==(const EntitySpan&) const = default;
};

// Leftmost, longest, greedy; a matched region is consumed.
std::vector<EntitySpan> extract_entities(std::string_view query, const EntityDictionary& dict);

struct QueryTemplate {
  std::string pattern;  // literal '<' and '\' escaped with '\'
  std::vector<std::string> slots;

  auto operator<=>(const QueryTemplate&) const = default;
};

// Throws kInvalidInput for overlapping or out-of-bounds spans.
QueryTemplate templatize(std::string_view query, std::span<const EntitySpan> spans);

// Inverse of templatize; throws kInvalidInput when surfaces do not fit slots.
std::string instantiate(const QueryTemplate& tmpl, std::span<const std::string> surfaces);

QueryTemplate template_of(std::string_view canonical_query, const EntityDictionary& dict);

}  // namespace fcaccel::ner
