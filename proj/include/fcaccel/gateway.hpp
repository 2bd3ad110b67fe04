#pragma once

// Online serving (route, small path, large fallback, metrics) and the
// offline traffic replay simulator.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fcaccel/corpus.hpp"
#include "fcaccel/embedding.hpp"
#include "fcaccel/ner.hpp"
#include "fcaccel/paramgen.hpp"
#include "fcaccel/router.hpp"
#include "fcaccel/util.hpp"

namespace httplib {
class Server;
}

namespace fcaccel::gateway {

// Whole milliseconds so replay arithmetic stays exact.
struct LatencyModel {
  std::int64_t routing_ms = 50;
  std::int64_t small_ms = 300;
  std::int64_t large_ms = 1600;

  void validate() const;
};

// r + s*c + l*(1-c). Throws kInvalidInput unless 0 <= c <= 1.
double expected_latency(const LatencyModel& model, double coverage);
// Same closed form with c = routed_small / total, evaluated as one division.
double expected_latency(const LatencyModel& model, std::uint64_t routed_small, std::uint64_t total);

struct TrafficReport {
  LatencyModel model;
  std::uint64_t total = 0;
  std::uint64_t routed_small = 0;
  double coverage = 0.0;
  double expected_ms = 0.0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p90_ms = 0.0;
  std::uint64_t disagreements = 0;
  std::optional<double> disagreement_rate;  // null when nothing routed small
  std::map<std::string, std::uint64_t> reason_counts;

  // Relative to sending everything to the large model without routing.
  double expected_reduction() const;
  double median_reduction() const;
};

ordered_json to_json(const TrafficReport& report);
TrafficReport report_from_json(const json& j);
std::string render(const TrafficReport& report);

struct ReplayOptions {
  LatencyModel model;
  std::int64_t jitter_ms = 0;  // uniform extra [0, jitter_ms] per request
  std::uint64_t seed = 0;
};

// Routes every record and simulates its latency. Throws kEmptyCorpus.
TrafficReport replay(std::span<const corpus::FunctionCallRecord> records, const router::RoutingTable& table,
                     const embedding::Vectorizer& vectorizer, const ner::EntityDictionary& dict,
                     const ReplayOptions& options = {});

struct FunctionCallRequest {
  std::string query;
  std::vector<corpus::Turn> history;
  std::vector<corpus::ToolSchema> tools;

  // Throws kInvalidInput / kValidation on a malformed body.
  static FunctionCallRequest from_json(const ordered_json& j);
  ordered_json to_json() const;
};

class LargeModelBackend {
 public:
  virtual ~LargeModelBackend() = default;
  virtual paramgen::FunctionCallResult call(const FunctionCallRequest& request,
                                            std::chrono::milliseconds deadline) const = 0;
};

// POST {"query","history","tools"} -> {"name","arguments"}
class HttpLargeModelBackend final : public LargeModelBackend {
 public:
  explicit HttpLargeModelBackend(std::string url);
  paramgen::FunctionCallResult call(const FunctionCallRequest& request,
                                    std::chrono::milliseconds deadline) const override;

 private:
  std::string base_;
  std::string path_;
};

struct GatewayConfig {
  std::chrono::milliseconds small_deadline{300};
  std::chrono::milliseconds large_deadline{3000};
  paramgen::TokenMapping mapping;
  router::TableOptions table_options;
};

struct GatewayResponse {
  paramgen::FunctionCallResult result;
  router::Route route = router::Route::kLarge;
  std::string reason;  // router reason, or small_path_failure
  std::optional<std::string> failure_detail;
  std::map<std::string, double> timings_ms;
  std::string snapshot_id;
};

ordered_json to_json(const GatewayResponse& response);

// Loads the newest snapshot under path (file or directory) and builds a table.
std::shared_ptr<const router::RoutingTable> load_routing_table(const std::filesystem::path& path,
                                                               const router::TableOptions& options,
                                                               std::vector<std::string>* diagnostics = nullptr);

class Gateway {
 public:
  // small may be null (every small route then falls back); large may be null.
  Gateway(GatewayConfig config, std::shared_ptr<const embedding::Vectorizer> vectorizer,
          std::shared_ptr<const ner::EntityDictionary> dictionary,
          std::shared_ptr<const paramgen::GenerationBackend> small,
          std::shared_ptr<const LargeModelBackend> large, std::shared_ptr<const router::RoutingTable> table);

  // Throws kServiceUnavailable when neither path can answer.
  GatewayResponse handle_query(const FunctionCallRequest& request);

  std::shared_ptr<const router::RoutingTable> table() const;
  // Throws kInvalidInput when the table does not fit the vectorizer.
  void swap_table(std::shared_ptr<const router::RoutingTable> table);
  // Returns the new snapshot id.
  std::string reload(const std::filesystem::path& snapshot_path);

  ordered_json metrics() const;
  void set_decision_log(std::function<void(const std::string&)> sink);

 private:
  struct Histogram {
    std::vector<std::uint64_t> counts;  // one per bucket bound, plus overflow
    std::uint64_t count = 0;
    double sum_ms = 0.0;
  };
  void record(const std::optional<GatewayResponse>& response, double total_ms);

  GatewayConfig config_;
  std::shared_ptr<const embedding::Vectorizer> vectorizer_;
  std::shared_ptr<const ner::EntityDictionary> dictionary_;
  std::shared_ptr<const paramgen::GenerationBackend> small_;
  std::shared_ptr<const LargeModelBackend> large_;

  mutable std::mutex table_mutex_;
  std::shared_ptr<const router::RoutingTable> table_;

  mutable std::mutex metrics_mutex_;
  std::uint64_t total_ = 0;
  std::uint64_t routed_small_ = 0;
  std::uint64_t routed_large_ = 0;
  std::uint64_t errors_ = 0;
  std::uint64_t fallbacks_ = 0;
  std::map<std::string, std::uint64_t> reasons_;
  Histogram small_latency_;
  Histogram large_latency_;
  std::function<void(const std::string&)> log_sink_;
};

// HTTP front end. Binds on construction; port 0 picks a free port.
class GatewayServer {
 public:
  GatewayServer(Gateway& gateway, const std::string& host, int port);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  int port() const noexcept { return port_; }
  void start();  // background thread
  void run();    // blocks
  void stop();

 private:
  Gateway& gateway_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace fcaccel::gateway
