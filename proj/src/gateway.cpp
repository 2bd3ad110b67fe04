#include "fcaccel/gateway.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "fcaccel/error.hpp"
#include "fcaccel/snapshot.hpp"
#include "httplib.h"

namespace fcaccel::gateway {

using paramgen::FunctionCallResult;
using router::Route;

namespace {

constexpr double kBucketBoundsMs[] = {5, 10, 25, 50, 100, 250, 500, 1000, 2500, 5000};
constexpr std::size_t kBucketCount = std::size(kBucketBoundsMs) + 1;

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Nearest-rank percentile over sorted values.
std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, std::uint64_t percent) {
  const std::uint64_t n = sorted.size();
  const std::uint64_t rank = (percent * n + 99) / 100;
  return sorted[std::max<std::uint64_t>(rank, 1) - 1];
}

}  // namespace

void LatencyModel::validate() const {
  if (routing_ms < 0 || small_ms < 0 || large_ms < 0) fail(ErrorCode::kInvalidInput, "latencies must be non-negative");
  if (small_ms >= large_ms) fail(ErrorCode::kInvalidInput, "small-path latency must be below large-path latency");
}

double expected_latency(const LatencyModel& model, double coverage) {
  model.validate();
  if (!(coverage >= 0.0 && coverage <= 1.0)) fail(ErrorCode::kInvalidInput, "coverage must be in [0, 1]");
  return static_cast<double>(model.routing_ms) + static_cast<double>(model.small_ms) * coverage +
         static_cast<double>(model.large_ms) * (1.0 - coverage);
}

double expected_latency(const LatencyModel& model, std::uint64_t routed_small, std::uint64_t total) {
  model.validate();
  if (total == 0 || routed_small > total) fail(ErrorCode::kInvalidInput, "coverage must be in [0, 1]");
  const auto n = static_cast<std::int64_t>(total);
  const auto k = static_cast<std::int64_t>(routed_small);
  const std::int64_t numerator = model.routing_ms * n + model.small_ms * k + model.large_ms * (n - k);
  return static_cast<double>(numerator) / static_cast<double>(n);
}

double TrafficReport::expected_reduction() const {
  return (static_cast<double>(model.large_ms) - expected_ms) / static_cast<double>(model.large_ms);
}

double TrafficReport::median_reduction() const {
  return (static_cast<double>(model.large_ms) - median_ms) / static_cast<double>(model.large_ms);
}

ordered_json to_json(const TrafficReport& r) {
  ordered_json j;
  j["latency_model"] = {{"routing_ms", r.model.routing_ms}, {"small_ms", r.model.small_ms}, {"large_ms", r.model.large_ms}};
  j["total"] = r.total;
  j["routed_small"] = r.routed_small;
  j["coverage"] = r.coverage;
  j["expected_ms"] = r.expected_ms;
  j["mean_ms"] = r.mean_ms;
  j["median_ms"] = r.median_ms;
  j["p90_ms"] = r.p90_ms;
  j["expected_reduction"] = r.expected_reduction();
  j["median_reduction"] = r.median_reduction();
  j["disagreements"] = r.disagreements;
  j["small_path_disagreement_rate"] = r.disagreement_rate ? ordered_json(*r.disagreement_rate) : ordered_json(nullptr);
  j["reason_counts"] = ordered_json::object();
  for (const auto& [reason, n] : r.reason_counts) j["reason_counts"][reason] = n;
  return j;
}

TrafficReport report_from_json(const json& j) {
  TrafficReport r;
  try {
    const auto& m = j.at("latency_model");
    r.model = {m.at("routing_ms").get<std::int64_t>(), m.at("small_ms").get<std::int64_t>(),
               m.at("large_ms").get<std::int64_t>()};
    r.total = j.at("total").get<std::uint64_t>();
    r.routed_small = j.at("routed_small").get<std::uint64_t>();
    r.coverage = j.at("coverage").get<double>();
    r.expected_ms = j.at("expected_ms").get<double>();
    r.mean_ms = j.at("mean_ms").get<double>();
    r.median_ms = j.at("median_ms").get<double>();
    r.p90_ms = j.at("p90_ms").get<double>();
    r.disagreements = j.value("disagreements", std::uint64_t{0});
    const auto& rate = j.at("small_path_disagreement_rate");
    if (!rate.is_null()) r.disagreement_rate = rate.get<double>();
    for (const auto& [reason, n] : j.at("reason_counts").items()) r.reason_counts[reason] = n.get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("malformed traffic report: ") + e.what());
  }
  r.model.validate();
  return r;
}

std::string render(const TrafficReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << "requests            " << r.total << "\n";
  out << "routed small        " << r.routed_small << " (" << r.coverage * 100.0 << "% coverage)\n";
  out << "latency model       routing " << r.model.routing_ms << " ms, small " << r.model.small_ms << " ms, large "
      << r.model.large_ms << " ms\n";
  out << "expected latency    " << r.expected_ms << " ms (" << r.expected_reduction() * 100.0
      << "% below large-only " << r.model.large_ms << " ms)\n";
  out << "mean latency        " << r.mean_ms << " ms\n";
  out << "median latency      " << r.median_ms << " ms (" << r.median_reduction() * 100.0 << "% reduction)\n";
  out << "p90 latency         " << r.p90_ms << " ms\n";
  if (r.disagreement_rate) {
    out << "small disagreement  " << r.disagreements << " (" << *r.disagreement_rate * 100.0 << "%)\n";
  } else {
    out << "small disagreement  n/a\n";
  }
  out << "decisions by reason\n";
  for (const auto& [reason, n] : r.reason_counts) out << "  " << reason << "  " << n << "\n";
  return out.str();
}

TrafficReport replay(std::span<const corpus::FunctionCallRecord> records, const router::RoutingTable& table,
                     const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict,
                     const ReplayOptions& options) {
  if (records.empty()) fail(ErrorCode::kEmptyCorpus, "replay: empty corpus");
  options.model.validate();
  if (options.jitter_ms < 0) fail(ErrorCode::kInvalidInput, "jitter must be non-negative");

  TrafficReport r;
  r.model = options.model;
  r.total = records.size();
  std::mt19937_64 rng(options.seed);
  std::vector<std::int64_t> latencies;
  latencies.reserve(records.size());
  for (const auto& rec : records) {
    const auto d = router::match_query(rec.query, rec.history.size(), table, vectorizer, dict, false);
    ++r.reason_counts[std::string(router::to_string(d.reason))];
    std::int64_t ms = options.model.routing_ms;
    if (d.route == Route::kSmall) {
      ++r.routed_small;
      ms += options.model.small_ms;
      if (d.matched_function != rec.called_function) ++r.disagreements;
    } else {
      ms += options.model.large_ms;
    }
    if (options.jitter_ms > 0) ms += static_cast<std::int64_t>(uniform_index(rng, options.jitter_ms + 1));
    latencies.push_back(ms);
  }
  std::sort(latencies.begin(), latencies.end());
  const std::int64_t sum = std::accumulate(latencies.begin(), latencies.end(), std::int64_t{0});
  r.coverage = static_cast<double>(r.routed_small) / static_cast<double>(r.total);
  r.expected_ms = expected_latency(options.model, r.routed_small, r.total);
  r.mean_ms = static_cast<double>(sum) / static_cast<double>(r.total);
  r.median_ms = static_cast<double>(nearest_rank(latencies, 50));
  r.p90_ms = static_cast<double>(nearest_rank(latencies, 90));
  if (r.routed_small > 0) {
    r.disagreement_rate = static_cast<double>(r.disagreements) / static_cast<double>(r.routed_small);
  }
  return r;
}

FunctionCallRequest FunctionCallRequest::from_json(const ordered_json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidInput, "request body must be a JSON object");
  FunctionCallRequest req;
  const auto q = j.find("query");
  if (q == j.end() || !q->is_string()) fail(ErrorCode::kInvalidInput, "request.query must be a string");
  req.query = q->get<std::string>();
  if (trim(req.query).empty()) fail(ErrorCode::kInvalidInput, "request.query is empty");
  if (auto h = j.find("history"); h != j.end() && !h->is_null()) req.history = corpus::history_from_json(*h);
  const auto t = j.find("tools");
  if (t == j.end()) fail(ErrorCode::kInvalidInput, "request.tools is required");
  req.tools = corpus::tools_from_json(*t);
  if (req.tools.empty()) fail(ErrorCode::kInvalidInput, "request.tools is empty");
  return req;
}

ordered_json FunctionCallRequest::to_json() const {
  ordered_json j;
  j["query"] = query;
  j["history"] = ordered_json::array();
  for (const auto& t : history) j["history"].push_back(corpus::to_json(t));
  j["tools"] = corpus::to_json(std::span<const corpus::ToolSchema>(tools));
  return j;
}

HttpLargeModelBackend::HttpLargeModelBackend(std::string url) {
  std::tie(base_, path_) = embedding::split_url(url);
}

FunctionCallResult HttpLargeModelBackend::call(const FunctionCallRequest& request,
                                               std::chrono::milliseconds deadline) const {
  httplib::Client client(base_);
  const auto ms = deadline.count();
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
  auto res = client.Post(path_, request.to_json().dump(), "application/json");
  if (!res) fail(ErrorCode::kBackendUnavailable, "large model unreachable: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorCode::kBackendUnavailable, "large model returned HTTP " + std::to_string(res->status));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("large model: malformed response: ") + e.what());
  }
  return paramgen::result_from_json(body);
}

ordered_json to_json(const GatewayResponse& response) {
  ordered_json j;
  j["result"] = paramgen::to_json(response.result);
  j["route"] = router::to_string(response.route);
  j["reason"] = response.reason;
  if (response.failure_detail) j["failure_detail"] = *response.failure_detail;
  j["timings_ms"] = ordered_json::object();
  for (const auto& [stage, ms] : response.timings_ms) j["timings_ms"][stage] = ms;
  j["snapshot_id"] = response.snapshot_id;
  return j;
}

std::shared_ptr<const router::RoutingTable> load_routing_table(const std::filesystem::path& path,
                                                               const router::TableOptions& options,
                                                               std::vector<std::string>* diagnostics) {
  const auto snap = clustering::load_snapshot(clustering::resolve_snapshot(path));
  return std::make_shared<const router::RoutingTable>(
      router::build_routing_table(snap.clusters, snap.snapshot_id, snap.vectorizer_name, options, diagnostics));
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<const embedding::Vectorizer> vectorizer,
                 std::shared_ptr<const ner::EntityDictionary> dictionary,
                 std::shared_ptr<const paramgen::GenerationBackend> small,
                 std::shared_ptr<const LargeModelBackend> large, std::shared_ptr<const router::RoutingTable> table)
    : config_(std::move(config)),
      vectorizer_(std::move(vectorizer)),
      dictionary_(std::move(dictionary)),
      small_(std::move(small)),
      large_(std::move(large)) {
  if (!vectorizer_ || !dictionary_) fail(ErrorCode::kInvalidInput, "gateway needs a vectorizer and a dictionary");
  small_latency_.counts.assign(kBucketCount, 0);
  large_latency_.counts.assign(kBucketCount, 0);
  swap_table(table ? std::move(table) : std::make_shared<const router::RoutingTable>());
}

std::shared_ptr<const router::RoutingTable> Gateway::table() const {
  std::lock_guard lock(table_mutex_);
  return table_;
}

void Gateway::swap_table(std::shared_ptr<const router::RoutingTable> table) {
  if (!table) fail(ErrorCode::kInvalidInput, "null routing table");
  if (!table->entries().empty()) {
    const auto& info = vectorizer_->info();
    if (table->vectorizer_name() != info.name || table->dimension() != info.dimension) {
      fail(ErrorCode::kInvalidInput, "snapshot was built with vectorizer '" + table->vectorizer_name() + "' (" +
                                         std::to_string(table->dimension()) + "), gateway uses '" + info.name + "'");
    }
  }
  std::lock_guard lock(table_mutex_);
  table_ = std::move(table);
}

std::string Gateway::reload(const std::filesystem::path& snapshot_path) {
  auto table = load_routing_table(snapshot_path, config_.table_options);
  std::string id = table->snapshot_id();
  swap_table(std::move(table));
  return id;
}

void Gateway::set_decision_log(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(metrics_mutex_);
  log_sink_ = std::move(sink);
}

GatewayResponse Gateway::handle_query(const FunctionCallRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const auto table = this->table();  // one snapshot for the whole request
  GatewayResponse resp;
  resp.snapshot_id = table->snapshot_id();

  const auto decision = router::match_query(request.query, request.history.size(), *table, *vectorizer_, *dictionary_);
  resp.timings_ms["routing"] = ms_since(start);
  resp.reason = router::to_string(decision.reason);
  {
    std::function<void(const std::string&)> sink;
    {
      std::lock_guard lock(metrics_mutex_);
      sink = log_sink_;
    }
    if (sink) sink(router::decision_log_line(request.query, decision));
  }

  if (decision.route == Route::kSmall) {
    const auto small_start = std::chrono::steady_clock::now();
    try {
      if (!small_) fail(ErrorCode::kBackendUnavailable, "no small-path backend configured");
      paramgen::GenerationRequest g;
      g.query = corpus::canonicalize_query(request.query);  // spans index the canonical text
      g.history = request.history;
      g.tools = paramgen::optimize_schema_tokens(request.tools, config_.mapping);
      g.context = {decision.matched_function.value_or(""), decision.spans};
      auto result = small_->generate(g, config_.small_deadline);
      if (ms_since(small_start) > static_cast<double>(config_.small_deadline.count())) {
        fail(ErrorCode::kTimeout, "small path exceeded its deadline");
      }
      paramgen::validate_result(result, g.tools);
      result = paramgen::restore_parameter_names(std::move(result), config_.mapping);
      paramgen::validate_result(result, request.tools);
      resp.result = std::move(result);
      resp.route = Route::kSmall;
      resp.timings_ms["small"] = ms_since(small_start);
      resp.timings_ms["total"] = ms_since(start);
      record(resp, resp.timings_ms["total"]);
      return resp;
    } catch (const std::exception& e) {
      resp.timings_ms["small"] = ms_since(small_start);
      resp.reason = "small_path_failure";
      resp.failure_detail = e.what();
    }
  }

  resp.route = Route::kLarge;
  const auto large_start = std::chrono::steady_clock::now();
  try {
    if (!large_) fail(ErrorCode::kBackendUnavailable, "no large-model backend configured");
    auto result = large_->call(request, config_.large_deadline);
    paramgen::validate_result(result, request.tools);
    resp.result = std::move(result);
  } catch (const std::exception& e) {
    record(std::nullopt, ms_since(start));
    fail(ErrorCode::kServiceUnavailable, std::string("no backend could answer: ") + e.what());
  }
  resp.timings_ms["large"] = ms_since(large_start);
  resp.timings_ms["total"] = ms_since(start);
  record(resp, resp.timings_ms["total"]);
  return resp;
}

void Gateway::record(const std::optional<GatewayResponse>& response, double total_ms) {
  std::lock_guard lock(metrics_mutex_);
  ++total_;
  if (!response) {
    ++errors_;
    return;
  }
  ++reasons_[response->reason];
  Histogram* h = nullptr;
  if (response->route == Route::kSmall) {
    ++routed_small_;
    h = &small_latency_;
  } else {
    ++routed_large_;
    if (response->failure_detail) ++fallbacks_;
    h = &large_latency_;
  }
  std::size_t bucket = 0;
  while (bucket < std::size(kBucketBoundsMs) && total_ms > kBucketBoundsMs[bucket]) ++bucket;
  ++h->counts[bucket];
  ++h->count;
  h->sum_ms += total_ms;
}

ordered_json Gateway::metrics() const {
  auto histogram = [](const Histogram& h) {
    ordered_json j;
    j["count"] = h.count;
    j["sum_ms"] = h.sum_ms;
    j["buckets"] = ordered_json::array();
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      ordered_json b;
      b["le_ms"] = i < std::size(kBucketBoundsMs) ? ordered_json(kBucketBoundsMs[i]) : ordered_json("inf");
      b["count"] = h.counts[i];
      j["buckets"].push_back(std::move(b));
    }
    return j;
  };
  const auto snapshot_id = table()->snapshot_id();
  std::lock_guard lock(metrics_mutex_);
  ordered_json j;
  j["total"] = total_;
  j["routed_small"] = routed_small_;
  j["routed_large"] = routed_large_;
  j["errors"] = errors_;
  j["fallbacks"] = fallbacks_;
  j["reasons"] = ordered_json::object();
  for (const auto& [reason, n] : reasons_) j["reasons"][reason] = n;
  j["latency_ms"] = {{"small", histogram(small_latency_)}, {"large", histogram(large_latency_)}};
  j["snapshot_id"] = snapshot_id;
  return j;
}

namespace {

void send_error(httplib::Response& res, const Error& e) {
  int status = 500;
  switch (e.code()) {
    case ErrorCode::kInvalidInput:
    case ErrorCode::kValidation:
    case ErrorCode::kParse: status = 400; break;
    case ErrorCode::kIo: status = 404; break;
    case ErrorCode::kServiceUnavailable:
      status = 503;
      res.set_header("Retry-After", "1");
      break;
    default: break;
  }
  ordered_json body;
  body["error"] = to_string(e.code());
  body["message"] = e.what();
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send_error(res, Error(ErrorCode::kInvalidInput, std::string("malformed JSON: ") + e.what()));
  } catch (const std::exception& e) {
    send_error(res, Error(ErrorCode::kIo, e.what()));
  }
}

}  // namespace

GatewayServer::GatewayServer(Gateway& gateway, const std::string& host, int port)
    : gateway_(gateway), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/v1/function-call", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto request = FunctionCallRequest::from_json(ordered_json::parse(req.body));
      res.set_content(to_json(gateway_.handle_query(request)).dump(), "application/json");
    });
  });
  server_->Post("/v1/reload", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      const auto path = body.at("snapshot_path").get<std::string>();
      ordered_json out;
      out["snapshot_id"] = gateway_.reload(path);
      res.set_content(out.dump(), "application/json");
    });
  });
  server_->Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(gateway_.metrics().dump(), "application/json");
  });
  server_->Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
    ordered_json out;
    out["status"] = "ok";
    out["snapshot_id"] = gateway_.table()->snapshot_id();
    res.set_content(out.dump(), "application/json");
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else if (server_->bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  while (!server_->is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
}

void GatewayServer::run() { server_->listen_after_bind(); }

void GatewayServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fcaccel::gateway
