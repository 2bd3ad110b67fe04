#pragma once

// Function-calling traffic records: schema types, line-delimited ingestion,
// query canonicalization and identical-query grouping.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcaccel/util.hpp"

namespace fcaccel::corpus {

inline constexpr std::size_t kMaxHistoryTurns = 3;

enum class Role { kUser, kAssistant };

struct Turn {
  Role role = Role::kUser;
  std::string text;

  bool operator==(const Turn&) const = default;
};

enum class ParamType { kString, kNumber, kBoolean, kEnum };

std::string_view to_string(ParamType type);
std::optional<ParamType> parse_param_type(std::string_view tag);

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::kString;
  bool required = false;
  std::vector<std::string> enum_values;

  bool operator==(const ParamSpec&) const = default;
};

struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<ParamSpec> parameters;  // schema order

  const ParamSpec* find(std::string_view param) const;
  bool operator==(const ToolSchema&) const = default;
};

const ToolSchema* find_tool(std::span<const ToolSchema> tools, std::string_view name);

using Arguments = std::map<std::string, std::string>;
using FunctionHistogram = std::map<std::string, std::size_t>;

struct FunctionCallRecord {
  std::string record_id;
  std::string query;
  std::vector<Turn> history;
  std::vector<ToolSchema> tools;
  std::string called_function;
  Arguments arguments;
  std::int64_t timestamp_ms = 0;

  // Number of non-empty argument values.
  std::size_t completeness() const;
  bool operator==(const FunctionCallRecord&) const = default;
};

struct QueryGroup {
  std::string query_text;
  std::vector<FunctionCallRecord> records;
  FunctionHistogram function_histogram;

  // Record count; falls back to the histogram total for groups loaded
  // without their records.
  std::size_t weight() const;
  void rebuild_histogram();
};

struct Diagnostic {
  std::size_t line = 0;  // 1-based; 0 when not tied to a line
  std::string reason;

  bool operator==(const Diagnostic&) const = default;
};

struct IngestResult {
  std::vector<FunctionCallRecord> records;
  std::vector<Diagnostic> diagnostics;
};

// Never throws on per-line problems; only on an unreadable stream.
IngestResult ingest_records(std::istream& source);

std::string canonicalize_query(std::string_view raw);

// One group per canonical query, ordered by query text; records keep input order.
std::vector<QueryGroup> group_by_query(std::span<const FunctionCallRecord> records);

// Strict ordering used when picking representatives and pruning:
// more non-empty arguments, then newer, then smaller record_id.
bool preferred_over(const FunctionCallRecord& a, const FunctionCallRecord& b);

// Throws Error(kValidation) when arguments do not fit the tool schema:
// unknown keys, missing required parameters, enum/number/boolean mismatches.
void validate_arguments(const ToolSchema& tool, const Arguments& arguments);

// JSON forms (also the wire format for tools in requests and prompts).
ordered_json to_json(const ParamSpec& param);
ordered_json to_json(const ToolSchema& tool);
ordered_json to_json(std::span<const ToolSchema> tools);
ordered_json to_json(const Turn& turn);
ordered_json to_json(const FunctionCallRecord& record);

// Throw Error(kValidation) with a readable reason.
ToolSchema tool_from_json(const ordered_json& j);
std::vector<ToolSchema> tools_from_json(const ordered_json& j);
std::vector<Turn> history_from_json(const ordered_json& j);
FunctionCallRecord record_from_json(const ordered_json& j);

std::string serialize_records(std::span<const FunctionCallRecord> records);

}  // namespace fcaccel::corpus
