#pragma once

// Small-model prompt assembly, schema token optimization, generation
// backends and function-call output parsing.

#include <chrono>
#include <map>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcaccel/corpus.hpp"
#include "fcaccel/ner.hpp"
#include "fcaccel/util.hpp"

namespace fcaccel::paramgen {

using corpus::Arguments;
using corpus::ToolSchema;
using corpus::Turn;

enum class SystemPromptVariant { kVerbose, kMinimal };

struct PromptBundle {
  std::string system_text;
  std::vector<Turn> turns;
  std::string instruction;
  std::string rendered;
};

// Throws kInvalidInput on empty tools. Only the last three turns are rendered.
PromptBundle assemble_prompt(std::span<const ToolSchema> tools, std::span<const Turn> history, std::string_view query,
                             SystemPromptVariant variant = SystemPromptVariant::kVerbose);

std::string render_tools(std::span<const ToolSchema> tools);
// Character count of the rendered schema; stands in for token count.
std::size_t schema_char_count(std::span<const ToolSchema> tools);

struct FunctionCallResult {
  std::string name;
  Arguments arguments;

  bool operator==(const FunctionCallResult&) const = default;
};

inline constexpr std::string_view kDefaultElidedPrefix = R"({"name":)";

// Compact {"name":...,"arguments":{...}}; optionally without the common prefix.
std::string serialize_fc_output(const FunctionCallResult& result, bool elide_prefix = false,
                                std::string_view prefix = kDefaultElidedPrefix);
ordered_json to_json(const FunctionCallResult& result);

struct ParseOptions {
  // Re-prepended when a backend emitted output without it.
  std::string elided_prefix = std::string(kDefaultElidedPrefix);
  bool accept_elided = true;
};

// Strict single-object parse + validation against tools.
// kParse on malformed text, kValidation on schema violations.
FunctionCallResult parse_fc_output(std::string_view text, std::span<const ToolSchema> tools,
                                   const ParseOptions& options = {});
FunctionCallResult result_from_json(const json& j);
void validate_result(const FunctionCallResult& result, std::span<const ToolSchema> tools);

// Bijective parameter-name aliasing.
class TokenMapping {
 public:
  TokenMapping() = default;
  // Throws kInvalidInput if the map is not injective or has empty names.
  explicit TokenMapping(std::map<std::string, std::string> original_to_alias);
  static TokenMapping from_json(const json& j);

  std::optional<std::string> alias_of(std::string_view original) const;
  std::optional<std::string> original_of(std::string_view alias) const;
  const std::map<std::string, std::string, std::less<>>& pairs() const noexcept { return forward_; }
  bool empty() const noexcept { return forward_.empty(); }

 private:
  std::map<std::string, std::string, std::less<>> forward_;
  std::map<std::string, std::string, std::less<>> inverse_;
};

// Renames every mapped parameter. Throws kInvalidInput when an alias would
// collide with another parameter name of the same tool.
std::vector<ToolSchema> optimize_schema_tokens(std::span<const ToolSchema> tools, const TokenMapping& mapping);
FunctionCallResult apply_parameter_aliases(FunctionCallResult result, const TokenMapping& mapping);
FunctionCallResult restore_parameter_names(FunctionCallResult result, const TokenMapping& mapping);

struct RoutingContext {
  std::string dominant_function;
  std::vector<ner::EntitySpan> spans;
};

struct GenerationRequest {
  std::string query;
  std::vector<Turn> history;
  std::vector<ToolSchema> tools;  // already token-optimized
  RoutingContext context;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // Must return a result valid against request.tools or throw
  // kTimeout / kStubIncomplete / kBackendUnavailable / kParse / kValidation.
  virtual FunctionCallResult generate(const GenerationRequest& request, std::chrono::milliseconds deadline) const = 0;
};

// Entity type -> candidate parameter names, tried in order.
struct SlotMap {
  std::map<std::string, std::vector<std::string>> params_by_type;

  static SlotMap defaults();
  static SlotMap from_json(const json& j);
};

// function -> parameter -> keyword -> enum value. Keywords match
// case-insensitively against the query with entity spans blanked out.
struct KeywordTable {
  std::map<std::string, std::map<std::string, std::map<std::string, std::string>>> entries;

  static KeywordTable from_json(const json& j);
};

// Deterministic slot-filling stand-in for a distilled small model.
class StubBackend final : public GenerationBackend {
 public:
  StubBackend(SlotMap slots, KeywordTable keywords) : slots_(std::move(slots)), keywords_(std::move(keywords)) {}

  FunctionCallResult generate(const GenerationRequest& request, std::chrono::milliseconds deadline) const override;

 private:
  SlotMap slots_;
  KeywordTable keywords_;
};

struct HttpGenerationConfig {
  std::string url;
  SystemPromptVariant variant = SystemPromptVariant::kVerbose;
  ParseOptions parse;
  std::ptrdiff_t max_in_flight = 8;
};

// POST {"prompt": string} -> {"text": string}
class HttpGenerationBackend final : public GenerationBackend {
 public:
  explicit HttpGenerationBackend(HttpGenerationConfig config);

  FunctionCallResult generate(const GenerationRequest& request, std::chrono::milliseconds deadline) const override;

 private:
  HttpGenerationConfig config_;
  std::string base_;
  std::string path_;
  mutable std::counting_semaphore<1024> in_flight_;
};

}  // namespace fcaccel::paramgen
