#include "fcaccel/corpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <set>
#include <string>

#include "fcaccel/error.hpp"

namespace fcaccel::corpus {

namespace {

const std::set<std::string, std::less<>> kRecordFields = {
    "record_id", "query", "history", "tools", "called_function", "arguments", "timestamp_ms"};

[[noreturn]] void invalid(const std::string& why) { fail(ErrorCode::kValidation, why); }

const ordered_json& require(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) invalid(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const ordered_json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) invalid(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

ParamSpec param_from_json(const std::string& name, const ordered_json& j) {
  ParamSpec p;
  p.name = name;
  if (name.empty()) invalid("empty parameter name");
  if (j.is_string()) {
    auto type = parse_param_type(j.get<std::string>());
    if (!type) invalid("parameter '" + name + "': unknown type '" + j.get<std::string>() + "'");
    p.type = *type;
  } else if (j.is_object()) {
    auto type = parse_param_type(require_string(j, "type"));
    if (!type) invalid("parameter '" + name + "': unknown type");
    p.type = *type;
    if (auto it = j.find("required"); it != j.end()) {
      if (!it->is_boolean()) invalid("parameter '" + name + "': 'required' must be boolean");
      p.required = it->get<bool>();
    }
    if (auto it = j.find("enum"); it != j.end()) {
      if (!it->is_array()) invalid("parameter '" + name + "': 'enum' must be an array");
      for (const auto& v : *it) {
        if (!v.is_string()) invalid("parameter '" + name + "': enum values must be strings");
        p.enum_values.push_back(v.get<std::string>());
      }
    }
  } else {
    invalid("parameter '" + name + "': expected type string or object");
  }
  if (p.type == ParamType::kEnum && p.enum_values.empty()) {
    invalid("parameter '" + name + "': enum type requires enum values");
  }
  return p;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size();
}

// Record parse shared by ingestion (collects soft warnings) and snapshot loading.
FunctionCallRecord parse_record(const ordered_json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) invalid("record must be a JSON object");
  FunctionCallRecord r;
  r.record_id = require_string(j, "record_id");
  if (r.record_id.empty()) invalid("empty record_id");
  r.query = require_string(j, "query");
  if (trim(r.query).empty()) invalid("empty query");
  if (auto it = j.find("history"); it != j.end()) {
    r.history = history_from_json(*it);
  } else {
    invalid("missing field 'history'");
  }
  r.tools = tools_from_json(require(j, "tools"));
  r.called_function = require_string(j, "called_function");
  const auto& args = require(j, "arguments");
  if (!args.is_object()) invalid("field 'arguments' must be an object");
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (!it.value().is_string()) invalid("argument '" + it.key() + "' must be a string");
    r.arguments[it.key()] = it.value().get<std::string>();
  }
  if (auto it = j.find("timestamp_ms"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) invalid("field 'timestamp_ms' must be an integer");
    r.timestamp_ms = it->get<std::int64_t>();
  } else {
    r.timestamp_ms = 0;
    if (warnings) warnings->push_back("missing timestamp_ms; assigned 0");
  }

  const ToolSchema* tool = find_tool(r.tools, r.called_function);
  if (!tool) invalid("unknown function '" + r.called_function + "'");
  validate_arguments(*tool, r.arguments);

  if (warnings) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!kRecordFields.contains(it.key())) warnings->push_back("unknown field '" + it.key() + "' ignored");
    }
  }
  return r;
}

}  // namespace

std::string_view to_string(ParamType type) {
  switch (type) {
    case ParamType::kString: return "string";
    case ParamType::kNumber: return "number";
    case ParamType::kBoolean: return "boolean";
    case ParamType::kEnum: return "enum";
  }
  return "string";
}

std::optional<ParamType> parse_param_type(std::string_view tag) {
  if (tag == "string") return ParamType::kString;
  if (tag == "number") return ParamType::kNumber;
  if (tag == "boolean") return ParamType::kBoolean;
  if (tag == "enum") return ParamType::kEnum;
  return std::nullopt;
}

const ParamSpec* ToolSchema::find(std::string_view param) const {
  for (const auto& p : parameters) {
    if (p.name == param) return &p;
  }
  return nullptr;
}

const ToolSchema* find_tool(std::span<const ToolSchema> tools, std::string_view name) {
  for (const auto& t : tools) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::size_t FunctionCallRecord::completeness() const {
  return static_cast<std::size_t>(
      std::count_if(arguments.begin(), arguments.end(), [](const auto& kv) { return !kv.second.empty(); }));
}

std::size_t QueryGroup::weight() const {
  if (!records.empty()) return records.size();
  std::size_t total = 0;
  for (const auto& [_, n] : function_histogram) total += n;
  return total;
}

void QueryGroup::rebuild_histogram() {
  function_histogram.clear();
  for (const auto& r : records) ++function_histogram[r.called_function];
}

void validate_arguments(const ToolSchema& tool, const Arguments& arguments) {
  for (const auto& [key, value] : arguments) {
    const ParamSpec* p = tool.find(key);
    if (!p) invalid("argument '" + key + "' not in schema of '" + tool.name + "'");
    if (value.empty()) continue;
    switch (p->type) {
      case ParamType::kString: break;
      case ParamType::kNumber:
        if (!is_number(value)) invalid("argument '" + key + "' is not a number");
        break;
      case ParamType::kBoolean:
        if (value != "true" && value != "false") invalid("argument '" + key + "' is not a boolean");
        break;
      case ParamType::kEnum:
        if (std::find(p->enum_values.begin(), p->enum_values.end(), value) == p->enum_values.end()) {
          invalid("argument '" + key + "' value '" + value + "' not in enum");
        }
        break;
    }
  }
  for (const auto& p : tool.parameters) {
    if (!p.required) continue;
    auto it = arguments.find(p.name);
    if (it == arguments.end() || it->second.empty()) {
      invalid("required argument '" + p.name + "' missing for '" + tool.name + "'");
    }
  }
}

bool preferred_over(const FunctionCallRecord& a, const FunctionCallRecord& b) {
  const auto ca = a.completeness();
  const auto cb = b.completeness();
  if (ca != cb) return ca > cb;
  if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms > b.timestamp_ms;
  return a.record_id < b.record_id;
}

std::string canonicalize_query(std::string_view raw) {
  // Collapse whitespace first; NFC never introduces or merges spaces, so
  // the composition is idempotent.
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < src.length();) {
    const UChar32 c = src.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.isEmpty()) collapsed.append(static_cast<UChar>(u' '));
    pending_space = false;
    collapsed.append(c);
  }

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) fail(ErrorCode::kInvalidInput, "NFC normalizer unavailable");
  icu::UnicodeString normalized = nfc->normalize(collapsed, status);
  if (U_FAILURE(status)) fail(ErrorCode::kInvalidInput, "NFC normalization failed");

  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::vector<QueryGroup> group_by_query(std::span<const FunctionCallRecord> records) {
  std::map<std::string, QueryGroup> by_text;
  for (const auto& r : records) {
    auto text = canonicalize_query(r.query);
    auto& g = by_text[text];
    if (g.records.empty()) g.query_text = text;
    g.records.push_back(r);
    ++g.function_histogram[r.called_function];
  }
  std::vector<QueryGroup> out;
  out.reserve(by_text.size());
  for (auto& [_, g] : by_text) out.push_back(std::move(g));
  return out;
}

IngestResult ingest_records(std::istream& source) {
  if (!source) fail(ErrorCode::kIo, "unreadable record source");
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      result.diagnostics.push_back({line_no, std::string("malformed JSON: ") + e.what()});
      continue;
    }
    std::vector<std::string> warnings;
    try {
      auto record = parse_record(j, &warnings);
      if (record.history.size() > kMaxHistoryTurns) {
        record.history.erase(record.history.begin(),
                             record.history.end() - static_cast<std::ptrdiff_t>(kMaxHistoryTurns));
      }
      result.records.push_back(std::move(record));
      for (auto& w : warnings) result.diagnostics.push_back({line_no, std::move(w)});
    } catch (const Error& e) {
      result.diagnostics.push_back({line_no, e.what()});
    }
  }
  if (source.bad()) fail(ErrorCode::kIo, "read error on record source");
  return result;
}

ordered_json to_json(const ParamSpec& param) {
  if (!param.required && param.type != ParamType::kEnum) return std::string(to_string(param.type));
  ordered_json j;
  j["type"] = to_string(param.type);
  if (param.required) j["required"] = true;
  if (!param.enum_values.empty()) j["enum"] = param.enum_values;
  return j;
}

ordered_json to_json(const ToolSchema& tool) {
  ordered_json j;
  j["name"] = tool.name;
  j["description"] = tool.description;
  ordered_json params = ordered_json::object();
  for (const auto& p : tool.parameters) params[p.name] = to_json(p);
  j["parameters"] = std::move(params);
  return j;
}

ordered_json to_json(std::span<const ToolSchema> tools) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : tools) arr.push_back(to_json(t));
  return arr;
}

ordered_json to_json(const Turn& turn) {
  ordered_json j;
  j["role"] = turn.role == Role::kUser ? "user" : "assistant";
  j["text"] = turn.text;
  return j;
}

ordered_json to_json(const FunctionCallRecord& record) {
  ordered_json j;
  j["record_id"] = record.record_id;
  j["query"] = record.query;
  ordered_json hist = ordered_json::array();
  for (const auto& t : record.history) hist.push_back(to_json(t));
  j["history"] = std::move(hist);
  j["tools"] = to_json(std::span<const ToolSchema>(record.tools));
  j["called_function"] = record.called_function;
  ordered_json args = ordered_json::object();
  for (const auto& [k, v] : record.arguments) args[k] = v;
  j["arguments"] = std::move(args);
  j["timestamp_ms"] = record.timestamp_ms;
  return j;
}

ToolSchema tool_from_json(const ordered_json& j) {
  if (!j.is_object()) invalid("tool schema must be an object");
  ToolSchema t;
  t.name = require_string(j, "name");
  if (t.name.empty()) invalid("empty tool name");
  if (auto it = j.find("description"); it != j.end()) {
    if (!it->is_string()) invalid("tool '" + t.name + "': description must be a string");
    t.description = it->get<std::string>();
  }
  std::set<std::string> seen;
  auto add = [&](ParamSpec p) {
    if (!seen.insert(p.name).second) invalid("tool '" + t.name + "': duplicate parameter '" + p.name + "'");
    t.parameters.push_back(std::move(p));
  };
  if (auto it = j.find("parameters"); it != j.end()) {
    if (it->is_object()) {
      for (auto p = it->begin(); p != it->end(); ++p) add(param_from_json(p.key(), p.value()));
    } else if (it->is_array()) {
      for (const auto& p : *it) {
        if (!p.is_object()) invalid("tool '" + t.name + "': parameter entries must be objects");
        add(param_from_json(require_string(p, "name"), p));
      }
    } else {
      invalid("tool '" + t.name + "': parameters must be an object or array");
    }
  }
  return t;
}

std::vector<ToolSchema> tools_from_json(const ordered_json& j) {
  if (!j.is_array()) invalid("tools must be an array");
  std::vector<ToolSchema> tools;
  std::set<std::string> names;
  for (const auto& t : j) {
    tools.push_back(tool_from_json(t));
    if (!names.insert(tools.back().name).second) invalid("duplicate tool '" + tools.back().name + "'");
  }
  return tools;
}

std::vector<Turn> history_from_json(const ordered_json& j) {
  if (!j.is_array()) invalid("history must be an array");
  std::vector<Turn> out;
  for (const auto& t : j) {
    if (!t.is_object()) invalid("history turns must be objects");
    const auto role = require_string(t, "role");
    Turn turn;
    if (role == "user") {
      turn.role = Role::kUser;
    } else if (role == "assistant") {
      turn.role = Role::kAssistant;
    } else {
      invalid("history role must be 'user' or 'assistant', got '" + role + "'");
    }
    turn.text = require_string(t, "text");
    out.push_back(std::move(turn));
  }
  return out;
}

FunctionCallRecord record_from_json(const ordered_json& j) { return parse_record(j, nullptr); }

std::string serialize_records(std::span<const FunctionCallRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace fcaccel::corpus
