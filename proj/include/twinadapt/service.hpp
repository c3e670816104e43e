#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/gap.hpp"
#include "twinadapt/net.hpp"
#include "twinadapt/pdca.hpp"
#include "twinadapt/pool.hpp"

namespace httplib {
class Server;
}

namespace twinadapt {

struct ServiceConfig {
  std::string pool_manifest;  // resolved against the config file directory
  RequirementSpec requirement;
  ModelConfiguration active;
  MonitorConfig monitor;
  EngineConfig engine;
  std::string telemetry_source;  // tcp://host:port; empty = frames are fed in-process
  std::string storage_dir;       // empty = in-memory only
};

// TOML sections: [pool] [application] [active] [monitor] [engine] [telemetry] [storage].
// Throws Error(ConfigError).
ServiceConfig load_service_config(const std::string& path);
ServiceConfig service_config_from_toml(const std::string& text, const std::filesystem::path& base_dir = {});

// Append-only JSON lines with an in-memory mirror. One writer at a time; a partial
// trailing line left by a crash is ignored on reload.
class JsonlStore {
 public:
  JsonlStore() = default;
  explicit JsonlStore(std::filesystem::path path) { open(std::move(path)); }

  // Attaches a backing file and loads what it already holds.
  void open(std::filesystem::path path);

  void append(const nlohmann::json& value);
  std::vector<nlohmann::json> last(std::size_t n) const;
  std::vector<nlohmann::json> all() const;
  std::size_t size() const;

  static std::vector<nlohmann::json> read_file(const std::filesystem::path& path);

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> items_;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// Process host: pool, gap monitor, engine, persistence and the HTTP/SSE API.
class Service {
 public:
  // Throws Error(ConfigError) for a missing pool manifest or invalid configuration.
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Throws Error(ConfigError) when the address cannot be bound.
  void start_http(const net::Address& address);
  int http_port() const { return http_port_; }
  // Connects to the telemetry source and processes frames in the background.
  void start_telemetry();
  void stop();

  // In-process telemetry path. With wait=true every trigger is run to completion before returning,
  // which makes batch runs deterministic.
  void ingest(const SignalFrame& frame);
  void close_through(double t);
  std::vector<WindowOutcome> process_windows(bool wait);

  Engine& engine() { return *engine_; }
  GapMonitor& monitor() { return *monitor_; }
  const ModelPool& pool() const { return *pool_; }
  EventBus& bus() { return *bus_; }
  std::vector<AdaptationRecord> completed() const;

  // API handlers (also served over HTTP).
  nlohmann::json status_json() const;
  nlohmann::json pool_json() const;
  nlohmann::json configurations_json() const;
  nlohmann::json gap_json(std::size_t n) const;
  nlohmann::json history_json(std::size_t n) const;
  HttpResponse history_entry(const std::string& cycle_id) const;
  HttpResponse pool_entry(const std::string& model_id) const;
  HttpResponse post_goal(const std::string& body);
  HttpResponse post_trigger(const std::string& body);

 private:
  void telemetry_loop(std::stop_token st);

  ServiceConfig cfg_;
  std::shared_ptr<ModelPool> pool_;
  std::shared_ptr<EventBus> bus_;
  JsonlStore history_;
  JsonlStore gap_;
  std::unique_ptr<GapMonitor> monitor_;
  std::unique_ptr<Engine> engine_;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex records_mutex_;
  std::vector<AdaptationRecord> records_;

  std::unique_ptr<httplib::Server> http_;
  std::jthread http_thread_;
  int http_port_ = 0;
  std::atomic<bool> stopping_{false};
  std::jthread telemetry_thread_;
};

}  // namespace twinadapt
