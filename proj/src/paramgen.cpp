#include "fcaccel/paramgen.hpp"

#include <algorithm>
#include <set>

#include "fcaccel/embedding.hpp"
#include "fcaccel/error.hpp"
#include "httplib.h"

namespace fcaccel::paramgen {

namespace {

constexpr std::string_view kVerboseRole =
    "# Role\n"
    "You are a parameter extraction bot. Your task is to analyze the user's conversation history and current "
    "query, select the appropriate tool, and output the corresponding parameters.\n"
    "\n"
    "# Tool Definition\n";
constexpr std::string_view kVerboseFormat =
    "\n\n"
    "# Output in the following JSON format\n"
    "{\"name\":\"tool_name\",\"arguments\":{\"key1\": \"value1\"}}\n"
    "\n";

constexpr std::string_view kMinimalRole = "# Task\nPick a tool, extract its parameters.\n# Tools\n";
constexpr std::string_view kMinimalFormat = "\n# Output JSON\n{\"name\":\"tool_name\",\"arguments\":{}}\n\n";

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  std::chrono::microseconds elapsed() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start_);
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

std::string render_tools(std::span<const ToolSchema> tools) { return corpus::to_json(tools).dump(); }

std::size_t schema_char_count(std::span<const ToolSchema> tools) { return render_tools(tools).size(); }

PromptBundle assemble_prompt(std::span<const ToolSchema> tools, std::span<const Turn> history, std::string_view query,
                             SystemPromptVariant variant) {
  if (tools.empty()) fail(ErrorCode::kInvalidInput, "assemble_prompt: no tools");
  PromptBundle b;
  const bool verbose = variant == SystemPromptVariant::kVerbose;
  b.system_text = verbose ? kVerboseRole : kMinimalRole;
  b.system_text += render_tools(tools);
  b.system_text += verbose ? kVerboseFormat : kMinimalFormat;

  const std::size_t keep = std::min(history.size(), corpus::kMaxHistoryTurns);
  b.turns.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
  b.instruction = std::string(query);

  b.rendered = b.system_text;
  b.rendered += "Based on the following conversation:\n";
  for (const auto& t : b.turns) {
    b.rendered += t.role == corpus::Role::kUser ? "### Instruction:\n" : "### Response:\n";
    b.rendered += t.text;
    b.rendered += '\n';
  }
  b.rendered += "### Instruction:\n";
  b.rendered += b.instruction;
  b.rendered += "\n### Response:\n";
  return b;
}

ordered_json to_json(const FunctionCallResult& result) {
  ordered_json j;
  j["name"] = result.name;
  ordered_json args = ordered_json::object();
  for (const auto& [k, v] : result.arguments) args[k] = v;
  j["arguments"] = std::move(args);
  return j;
}

std::string serialize_fc_output(const FunctionCallResult& result, bool elide_prefix, std::string_view prefix) {
  auto text = to_json(result).dump();
  if (elide_prefix && text.starts_with(prefix)) text.erase(0, prefix.size());
  return text;
}

FunctionCallResult result_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kParse, "function call output must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "name" && it.key() != "arguments") fail(ErrorCode::kParse, "unexpected key '" + it.key() + "'");
  }
  auto name = j.find("name");
  auto args = j.find("arguments");
  if (name == j.end() || !name->is_string()) fail(ErrorCode::kParse, "missing string 'name'");
  if (args == j.end() || !args->is_object()) fail(ErrorCode::kParse, "missing object 'arguments'");
  FunctionCallResult r;
  r.name = name->get<std::string>();
  for (auto it = args->begin(); it != args->end(); ++it) {
    if (!it.value().is_string()) fail(ErrorCode::kParse, "argument '" + it.key() + "' must be a string");
    r.arguments[it.key()] = it.value().get<std::string>();
  }
  return r;
}

void validate_result(const FunctionCallResult& result, std::span<const ToolSchema> tools) {
  const ToolSchema* tool = corpus::find_tool(tools, result.name);
  if (!tool) fail(ErrorCode::kValidation, "unknown function '" + result.name + "'");
  corpus::validate_arguments(*tool, result.arguments);
}

FunctionCallResult parse_fc_output(std::string_view text, std::span<const ToolSchema> tools,
                                   const ParseOptions& options) {
  std::string body(trim(text));
  if (options.accept_elided && !options.elided_prefix.empty() && !body.starts_with(options.elided_prefix)) {
    body.insert(0, options.elided_prefix);
  }
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("malformed function call output: ") + e.what());
  }
  auto result = result_from_json(j);
  validate_result(result, tools);
  return result;
}

TokenMapping::TokenMapping(std::map<std::string, std::string> original_to_alias) {
  for (auto& [original, alias] : original_to_alias) {
    if (original.empty() || alias.empty()) fail(ErrorCode::kInvalidInput, "token mapping names must be non-empty");
    if (!inverse_.emplace(alias, original).second) {
      fail(ErrorCode::kInvalidInput, "token mapping is not bijective: alias '" + alias + "' reused");
    }
    forward_.emplace(original, alias);
  }
}

TokenMapping TokenMapping::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidInput, "token mapping must be an object");
  return TokenMapping(j.get<std::map<std::string, std::string>>());
}

std::optional<std::string> TokenMapping::alias_of(std::string_view original) const {
  auto it = forward_.find(original);
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> TokenMapping::original_of(std::string_view alias) const {
  auto it = inverse_.find(alias);
  if (it == inverse_.end()) return std::nullopt;
  return it->second;
}

std::vector<ToolSchema> optimize_schema_tokens(std::span<const ToolSchema> tools, const TokenMapping& mapping) {
  std::vector<ToolSchema> out(tools.begin(), tools.end());
  if (mapping.empty()) return out;
  for (auto& tool : out) {
    std::set<std::string> names;
    for (auto& p : tool.parameters) {
      if (auto alias = mapping.alias_of(p.name)) p.name = *alias;
      if (!names.insert(p.name).second) {
        fail(ErrorCode::kInvalidInput, "alias '" + p.name + "' collides with a parameter of '" + tool.name + "'");
      }
    }
  }
  return out;
}

FunctionCallResult apply_parameter_aliases(FunctionCallResult result, const TokenMapping& mapping) {
  Arguments renamed;
  for (auto& [k, v] : result.arguments) renamed[mapping.alias_of(k).value_or(k)] = std::move(v);
  result.arguments = std::move(renamed);
  return result;
}

FunctionCallResult restore_parameter_names(FunctionCallResult result, const TokenMapping& mapping) {
  Arguments restored;
  for (auto& [k, v] : result.arguments) restored[mapping.original_of(k).value_or(k)] = std::move(v);
  result.arguments = std::move(restored);
  return result;
}

SlotMap SlotMap::defaults() {
  SlotMap m;
  m.params_by_type = {
      {"artist", {"creator", "creator_name"}},
      {"song", {"media", "media_name"}},
      {"genre", {"intent"}},
  };
  return m;
}

SlotMap SlotMap::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidInput, "slot map must be an object");
  SlotMap m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_string()) {
      m.params_by_type[it.key()] = {it.value().get<std::string>()};
    } else if (it.value().is_array()) {
      m.params_by_type[it.key()] = it.value().get<std::vector<std::string>>();
    } else {
      fail(ErrorCode::kInvalidInput, "slot map entry '" + it.key() + "' must be a string or array");
    }
  }
  return m;
}

KeywordTable KeywordTable::from_json(const json& j) {
  KeywordTable t;
  try {
    for (auto f = j.begin(); f != j.end(); ++f) {
      for (auto p = f.value().begin(); p != f.value().end(); ++p) {
        for (auto k = p.value().begin(); k != p.value().end(); ++k) {
          t.entries[f.key()][p.key()][ascii_lower(k.key())] = k.value().get<std::string>();
        }
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("keyword table: ") + e.what());
  }
  return t;
}

FunctionCallResult StubBackend::generate(const GenerationRequest& request, std::chrono::milliseconds deadline) const {
  const Stopwatch watch;
  const std::string& function = request.context.dominant_function;
  const ToolSchema* tool = corpus::find_tool(request.tools, function);
  if (!tool) fail(ErrorCode::kStubIncomplete, "dominant function '" + function + "' not offered in tools");

  std::string haystack = ascii_lower(request.query);
  for (const auto& s : request.context.spans) {
    if (s.end <= haystack.size()) std::fill(haystack.begin() + s.start, haystack.begin() + s.end, ' ');
  }

  FunctionCallResult result;
  result.name = function;
  std::vector<bool> used(request.context.spans.size(), false);
  const auto fn_keywords = keywords_.entries.find(function);
  for (const auto& p : tool->parameters) {
    if (p.type == corpus::ParamType::kEnum) {
      if (fn_keywords == keywords_.entries.end()) continue;
      auto param_keywords = fn_keywords->second.find(p.name);
      if (param_keywords == fn_keywords->second.end()) continue;
      const std::string* best_keyword = nullptr;
      const std::string* best_value = nullptr;
      for (const auto& [keyword, value] : param_keywords->second) {
        if (haystack.find(keyword) == std::string::npos) continue;
        if (std::find(p.enum_values.begin(), p.enum_values.end(), value) == p.enum_values.end()) continue;
        if (!best_keyword || keyword.size() > best_keyword->size()) {
          best_keyword = &keyword;
          best_value = &value;
        }
      }
      if (best_value) result.arguments[p.name] = *best_value;
      continue;
    }
    for (std::size_t i = 0; i < request.context.spans.size(); ++i) {
      if (used[i]) continue;
      const auto& span = request.context.spans[i];
      auto candidates = slots_.params_by_type.find(span.type_tag);
      if (candidates == slots_.params_by_type.end()) continue;
      const auto& names = candidates->second;
      if (std::find(names.begin(), names.end(), p.name) == names.end()) continue;
      result.arguments[p.name] = span.surface;
      used[i] = true;
      break;
    }
  }

  try {
    corpus::validate_arguments(*tool, result.arguments);
  } catch (const Error& e) {
    fail(ErrorCode::kStubIncomplete, e.what());
  }
  if (watch.elapsed() > deadline) fail(ErrorCode::kTimeout, "stub generation exceeded deadline");
  return result;
}

HttpGenerationBackend::HttpGenerationBackend(HttpGenerationConfig config)
    : config_(std::move(config)), in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)) {
  std::tie(base_, path_) = embedding::split_url(config_.url);
}

FunctionCallResult HttpGenerationBackend::generate(const GenerationRequest& request,
                                                   std::chrono::milliseconds deadline) const {
  if (!in_flight_.try_acquire_for(deadline)) fail(ErrorCode::kTimeout, "generation backend saturated");
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const auto prompt = assemble_prompt(request.tools, request.history, request.query, config_.variant);
  httplib::Client client(base_);
  const auto ms = deadline.count();
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
  json body;
  body["prompt"] = prompt.rendered;
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
      fail(ErrorCode::kTimeout, "generation backend: " + httplib::to_string(err));
    }
    fail(ErrorCode::kBackendUnavailable, "generation backend unreachable: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorCode::kBackendUnavailable, "generation backend returned HTTP " + std::to_string(res->status));
  }
  std::string text;
  try {
    text = json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("generation backend: malformed response: ") + e.what());
  }
  return parse_fc_output(text, request.tools, config_.parse);
}

}  // namespace fcaccel::paramgen
