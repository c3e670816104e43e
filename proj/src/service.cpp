#include "twinadapt/service.hpp"

#include <sys/socket.h>

#include <fstream>
#include <sstream>

#include <httplib.h>
#include <toml.hpp>

#include "twinadapt/error.hpp"

namespace twinadapt {

namespace fs = std::filesystem;

// ---- configuration ------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

double num(const toml::table& t, const char* key, double fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<double>()) return *v;
  config_error(std::string("'") + key + "' must be a number");
}

TagSet string_set(const toml::table& t, const char* key) {
  TagSet out;
  const toml::node* n = t.get(key);
  if (!n) return out;
  const auto* arr = n->as_array();
  if (!arr) config_error(std::string("'") + key + "' must be an array of strings");
  for (const auto& item : *arr) {
    auto s = item.value<std::string>();
    if (!s) config_error(std::string("'") + key + "' must be an array of strings");
    out.insert(*s);
  }
  return out;
}

std::pair<std::string, std::string> split_dot(const std::string& text) {
  auto dot = text.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == text.size()) config_error("expected <slot>.<port>, got '" + text + "'");
  return {text.substr(0, dot), text.substr(dot + 1)};
}

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t");
  const auto b = s.find_last_not_of(" \t");
  return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
}

std::map<std::string, DepthDirective> directives_from(const toml::table* t) {
  std::map<std::string, DepthDirective> out;
  if (!t) return out;
  for (const auto& [k, v] : *t) {
    auto s = v.value<std::string>();
    if (!s) config_error("directive for '" + std::string(k.str()) + "' must be a string");
    try {
      out[std::string(k.str())] = depth_directive_from_string(*s);
    } catch (const Error& e) {
      config_error(e.detail());
    }
  }
  return out;
}

}  // namespace

ServiceConfig service_config_from_toml(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    config_error(std::string("config: ") + std::string(e.description()));
  }
  ServiceConfig cfg;

  const auto* pool = root["pool"].as_table();
  auto manifest = pool ? pool->get_as<std::string>("manifest") : nullptr;
  if (!manifest) config_error("[pool] manifest is required");
  fs::path mp = manifest->get();
  if (mp.is_relative() && !base_dir.empty()) mp = base_dir / mp;
  cfg.pool_manifest = mp.string();

  const auto* app = root["application"].as_table();
  if (!app) config_error("[application] is required");
  auto app_id = app->get_as<std::string>("id");
  cfg.requirement.app_id = app_id ? app_id->get() : "default";
  for (const auto& tag : string_set(*app, "required_phenomena")) cfg.requirement.required_phenomena.push_back({tag, std::nullopt});
  if (auto* min_depth = app->get_as<toml::table>("min_depth")) {
    for (auto& req : cfg.requirement.required_phenomena) {
      if (auto v = (*min_depth)[req.tag].value<int64_t>()) req.min_depth = static_cast<int>(*v);
    }
  }
  if (cfg.requirement.required_phenomena.empty()) config_error("[application] required_phenomena must be nonempty");
  cfg.requirement.monitored_signals = string_set(*app, "monitored_signals");
  cfg.requirement.window_length = num(*app, "window_length", 30.0);

  const auto* active = root["active"].as_table();
  if (!active) config_error("[active] is required");
  auto active_id = active->get_as<std::string>("id");
  cfg.active.id = active_id ? active_id->get() : "initial";
  cfg.active.status = ConfigStatus::Active;
  const auto* bindings = active->get_as<toml::table>("bindings");
  if (!bindings || bindings->empty()) config_error("[active] bindings are required");
  for (const auto& [slot, model] : *bindings) {
    auto id = model.value<std::string>();
    if (!id) config_error("binding for '" + std::string(slot.str()) + "' must be a model id");
    cfg.active.bindings[std::string(slot.str())] = ModelBinding{*id, {}};
  }
  if (const auto* params = active->get_as<toml::table>("params")) {
    for (const auto& [slot, table] : *params) {
      auto b = cfg.active.bindings.find(std::string(slot.str()));
      if (b == cfg.active.bindings.end()) config_error("[active.params] names unbound slot '" + std::string(slot.str()) + "'");
      const auto* t = table.as_table();
      if (!t) config_error("[active.params] entries must be tables");
      for (const auto& [name, v] : *t) b->second.params[std::string(name.str())] = num(*t, std::string(name.str()).c_str(), 0.0);
    }
  }
  if (const auto* couplings = active->get_as<toml::array>("couplings")) {
    for (const auto& item : *couplings) {
      auto s = item.value<std::string>();
      if (!s) config_error("couplings must be strings \"a.out -> b.in\"");
      auto arrow = s->find("->");
      if (arrow == std::string::npos) config_error("coupling '" + *s + "' lacks '->'");
      auto [fs_, fp] = split_dot(trim(s->substr(0, arrow)));
      auto [ts, tp] = split_dot(trim(s->substr(arrow + 2)));
      cfg.active.couplings.push_back({fs_, fp, ts, tp});
    }
  }

  if (const auto* mon = root["monitor"].as_table()) {
    cfg.monitor.epsilon = num(*mon, "epsilon", cfg.monitor.epsilon);
    cfg.monitor.hold_off = static_cast<int>(num(*mon, "hold_off", cfg.monitor.hold_off));
    cfg.monitor.warmup = num(*mon, "warmup", cfg.monitor.warmup);
    cfg.monitor.match_horizon = num(*mon, "match_horizon", cfg.monitor.match_horizon);
    cfg.monitor.retain_windows = static_cast<std::size_t>(num(*mon, "retain_windows", static_cast<double>(cfg.monitor.retain_windows)));
  }
  cfg.monitor.window_length = cfg.requirement.window_length;
  if (!cfg.requirement.monitored_signals.empty()) cfg.monitor.monitored_signals = cfg.requirement.monitored_signals;
  if (!(cfg.monitor.epsilon > 0.0)) config_error("[monitor] epsilon must be > 0");
  if (!(cfg.monitor.window_length > 0.0)) config_error("window_length must be > 0");

  EngineConfig& e = cfg.engine;
  if (const auto* eng = root["engine"].as_table()) {
    if (const auto* w = eng->get_as<toml::table>("weights")) {
      try {
        e.weights = normalize_weights(num(*w, "time", 0.0), num(*w, "cost", 0.0), num(*w, "quality", 0.0));
      } catch (const Error& err) {
        config_error("[engine] weights: " + err.detail());
      }
    }
    e.directives = directives_from(eng->get_as<toml::table>("directives"));
    e.epsilon_accept = num(*eng, "epsilon_accept", e.epsilon_accept);
    e.batch_size = static_cast<std::size_t>(num(*eng, "batch_size", static_cast<double>(e.batch_size)));
    e.max_rounds = static_cast<int>(num(*eng, "max_rounds", e.max_rounds));
    cfg.monitor.dt = num(*eng, "dt", cfg.monitor.dt);
    e.fit.budget = static_cast<std::size_t>(num(*eng, "fit_budget", static_cast<double>(e.fit.budget)));
    e.fit.tol = num(*eng, "fit_tol", e.fit.tol);
  }
  if (!(e.epsilon_accept > 0.0)) config_error("[engine] epsilon_accept must be > 0");
  if (e.batch_size < 1) config_error("[engine] batch_size must be >= 1");
  if (e.max_rounds < 1) config_error("[engine] max_rounds must be >= 1");
  if (e.fit.budget < 1) config_error("[engine] fit_budget must be >= 1");
  if (!(cfg.monitor.dt > 0.0)) config_error("[engine] dt must be > 0");
  e.monitor = cfg.monitor;

  if (const auto* tel = root["telemetry"].as_table()) {
    if (auto src = tel->get_as<std::string>("source")) cfg.telemetry_source = src->get();
  }
  if (const auto* st = root["storage"].as_table()) {
    if (auto dir = st->get_as<std::string>("dir")) {
      fs::path p = dir->get();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      cfg.storage_dir = p.string();
    }
  }
  return cfg;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("config file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return service_config_from_toml(ss.str(), fs::absolute(path).parent_path());
}

// ---- JsonlStore ---------------------------------------------------------

void JsonlStore::open(fs::path path) {
  std::lock_guard lock(mutex_);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  items_ = read_file(path);
  path_ = std::move(path);
}

std::vector<nlohmann::json> JsonlStore::read_file(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // partial trailing line
    auto j = nlohmann::json::parse(data.substr(pos, nl - pos), nullptr, false);
    if (!j.is_discarded()) out.push_back(std::move(j));
    pos = nl + 1;
  }
  return out;
}

void JsonlStore::append(const nlohmann::json& value) {
  std::lock_guard lock(mutex_);
  if (path_) {
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorKind::ConfigError, "cannot append to " + path_->string());
    out << value.dump() << '\n';
    out.flush();
  }
  items_.push_back(value);
}

std::vector<nlohmann::json> JsonlStore::last(std::size_t n) const {
  std::lock_guard lock(mutex_);
  const std::size_t from = items_.size() > n ? items_.size() - n : 0;
  return {items_.begin() + static_cast<std::ptrdiff_t>(from), items_.end()};
}

std::vector<nlohmann::json> JsonlStore::all() const {
  std::lock_guard lock(mutex_);
  return items_;
}

std::size_t JsonlStore::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

// ---- Service ------------------------------------------------------------

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)), started_(std::chrono::steady_clock::now()) {
  if (!fs::exists(cfg_.pool_manifest)) config_error("pool manifest not found: " + cfg_.pool_manifest);
  try {
    pool_ = std::make_shared<ModelPool>(load_pool_manifest(cfg_.pool_manifest));
  } catch (const Error& e) {
    config_error(std::string("pool manifest invalid: ") + e.what());
  }
  auto violations = pool_->validate_configuration(cfg_.active);
  if (!violations.empty()) {
    config_error("active configuration invalid: " + violations.front().rule + " (" + violations.front().detail + ")");
  }
  try {
    compose(cfg_.active, *pool_);
  } catch (const Error& e) {
    config_error(std::string("active configuration invalid: ") + e.what());
  }
  if (!cfg_.storage_dir.empty()) {
    history_.open(fs::path(cfg_.storage_dir) / "history.jsonl");
    gap_.open(fs::path(cfg_.storage_dir) / "gap.jsonl");
  }
  bus_ = std::make_shared<EventBus>();
  monitor_ = std::make_unique<GapMonitor>(cfg_.monitor, pool_, cfg_.active);

  EngineHooks hooks;
  hooks.on_activate = [this](const ModelConfiguration& c) { monitor_->rebind(c); };
  hooks.on_record = [this](const AdaptationRecord& r) {
    history_.append(record_to_json(r));
    std::lock_guard lock(records_mutex_);
    records_.push_back(r);
  };
  hooks.latest_window = [this]() -> std::shared_ptr<const RecordedWindow> {
    auto all = monitor_->recorded();
    return all.empty() ? nullptr : all.back();
  };
  engine_ = std::make_unique<Engine>(pool_, cfg_.engine, cfg_.requirement, cfg_.active, hooks, bus_);
}

Service::~Service() { stop(); }

void Service::stop() {
  stopping_ = true;
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  if (telemetry_thread_.joinable()) {
    telemetry_thread_.request_stop();
    telemetry_thread_.join();
  }
}

void Service::ingest(const SignalFrame& frame) { monitor_->ingest(frame); }

void Service::close_through(double t) { monitor_->close_through(t); }

std::vector<WindowOutcome> Service::process_windows(bool wait) {
  auto outcomes = monitor_->evaluate_pending();
  for (const auto& o : outcomes) {
    gap_.append(report_to_json(o.report));
    bus_->publish(o.report.degraded ? "monitor_degraded" : "gap_report", report_to_json(o.report));
    if (!o.trigger) continue;
    TriggerEvent t;
    t.kind = TriggerKind::AssetDeviation;
    t.report = o.report;
    t.recorded = o.recorded;
    t.source = "monitor";
    auto ticket = engine_->submit(std::move(t));
    if (wait) ticket.record.wait();
  }
  return outcomes;
}

std::vector<AdaptationRecord> Service::completed() const {
  std::lock_guard lock(records_mutex_);
  return records_;
}

void Service::telemetry_loop(std::stop_token st) {
  const auto addr = net::parse_address(cfg_.telemetry_source);
  while (!st.stop_requested()) {
    std::optional<net::LineStream> stream;
    try {
      stream.emplace(net::LineStream::connect(addr, std::chrono::milliseconds(1000)));
      bus_->publish("telemetry", {{"state", "connected"}, {"source", cfg_.telemetry_source}});
    } catch (const Error&) {
      std::this_thread::sleep_for(std::chrono::milliseconds(500));
      continue;
    }
    while (!st.stop_requested()) {
      if (!stream->poll_readable(std::chrono::milliseconds(100))) continue;
      auto line = stream->read_line(std::chrono::milliseconds(1000));
      if (!line) break;
      auto j = nlohmann::json::parse(*line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("signal")) continue;  // acks and noise
      try {
        monitor_->ingest(frame_from_json(j));
      } catch (const Error&) {
        continue;
      }
      if (monitor_->pending() > 0) process_windows(false);
    }
    bus_->publish("telemetry", {{"state", "disconnected"}, {"source", cfg_.telemetry_source}});
  }
}

void Service::start_telemetry() {
  if (cfg_.telemetry_source.empty()) return;
  telemetry_thread_ = std::jthread([this](std::stop_token st) { telemetry_loop(st); });
}

// ---- API handlers -------------------------------------------------------

namespace {

nlohmann::json config_summary(const ModelConfiguration& c, const ModelPool& pool) {
  nlohmann::json j = configuration_to_json(c);
  j["structure_id"] = c.structure_id();
  j["models"] = nlohmann::json::object();
  for (const auto& [slot, b] : c.bindings) {
    const auto* d = pool.find(b.model_id);
    j["models"][slot] = {{"model", b.model_id}, {"depth", d ? d->depth : 0}};
  }
  return j;
}

nlohmann::json directives_json(const std::map<std::string, DepthDirective>& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [slot, dir] : d) j[slot] = std::string(to_string(dir));
  return j;
}

HttpResponse unprocessable(const std::string& why) { return {422, {{"error", why}}}; }

}  // namespace

nlohmann::json Service::status_json() const {
  EngineStatus s = engine_->status();
  nlohmann::json j;
  j["active"] = config_summary(s.active, *pool_);
  auto d = monitor_->last_deviation();
  j["D"] = d ? nlohmann::json(*d) : nlohmann::json(nullptr);
  j["adaptation_in_progress"] = s.in_progress;
  j["cycles_run"] = s.cycles_run;
  j["triggers_queued"] = s.queued;
  j["uptime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  j["goal"] = {{"weights", weights_to_json(s.weights)}, {"directives", directives_json(s.directives)}};
  j["requirement"] = requirement_to_json(s.requirement);
  j["dropped_frames"] = monitor_->dropped();
  j["epsilon"] = cfg_.monitor.epsilon;
  j["epsilon_accept"] = cfg_.engine.epsilon_accept;
  return j;
}

nlohmann::json Service::pool_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : pool_->all()) j.push_back(descriptor_to_json(d));
  return {{"models", j}};
}

HttpResponse Service::pool_entry(const std::string& model_id) const {
  const auto* d = pool_->find(model_id);
  if (!d) return {404, {{"error", "unknown model '" + model_id + "'"}}};
  return {200, descriptor_to_json(*d)};
}

nlohmann::json Service::configurations_json() const {
  EngineStatus s = engine_->status();
  nlohmann::json j;
  j["active"] = nlohmann::json::array();
  for (const auto& c : s.active_set) j["active"].push_back(config_summary(c, *pool_));
  j["retired"] = nlohmann::json::array();
  for (const auto& c : engine_->retired()) j["retired"].push_back(config_summary(c, *pool_));
  return j;
}

nlohmann::json Service::gap_json(std::size_t n) const { return gap_.last(n); }

nlohmann::json Service::history_json(std::size_t n) const { return history_.last(n); }

HttpResponse Service::history_entry(const std::string& cycle_id) const {
  for (const auto& r : history_.all()) {
    if (r.value("cycle_id", "") == cycle_id) return {200, r};
  }
  return {404, {{"error", "unknown cycle '" + cycle_id + "'"}}};
}

HttpResponse Service::post_goal(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return unprocessable("body must be a JSON object");
  EngineStatus s = engine_->status();
  Weights w = s.weights;
  auto directives = s.directives;
  try {
    if (j.contains("weights")) {
      const auto& wj = j["weights"];
      double t, c, q;
      if (wj.is_array() && wj.size() == 3) {
        t = wj[0].get<double>();
        c = wj[1].get<double>();
        q = wj[2].get<double>();
      } else if (wj.is_object()) {
        t = wj.value("time", 0.0);
        c = wj.value("cost", 0.0);
        q = wj.value("quality", 0.0);
      } else {
        return unprocessable("weights must be {time, cost, quality} or [time, cost, quality]");
      }
      w = normalize_weights(t, c, q);
    }
    if (j.contains("directives")) {
      if (!j["directives"].is_object()) return unprocessable("directives must be an object");
      directives.clear();
      for (const auto& [slot, v] : j["directives"].items()) {
        if (!v.is_string()) return unprocessable("directive for '" + slot + "' must be a string");
        directives[slot] = depth_directive_from_string(v.get<std::string>());
      }
    }
    engine_->set_goal(w, directives);
  } catch (const Error& e) {
    return unprocessable(e.detail());
  } catch (const nlohmann::json::exception& e) {
    return unprocessable(e.what());
  }
  nlohmann::json out = {{"weights", weights_to_json(w)}, {"directives", directives_json(directives)}};
  bus_->publish("goal_updated", out);
  return {200, out};
}

HttpResponse Service::post_trigger(const std::string& body) {
  auto j = nlohmann::json::parse(body.empty() ? "{}" : body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return unprocessable("body must be a JSON object");
  TriggerEvent t;
  t.source = "manual";
  try {
    t.kind = trigger_kind_from_string(j.value("kind", std::string("asset_deviation")));
    if (t.kind == TriggerKind::AssetDeviation) {
      std::optional<Window> w;
      if (j.contains("report")) {
        t.report = report_from_json(j["report"]);
        w = t.report->window;
      } else if (j.contains("window")) {
        const auto& wj = j["window"];
        if (!wj.is_array() || wj.size() != 2 || !wj[0].is_number() || !wj[1].is_number()) {
          return unprocessable("window must be [t0, t1]");
        }
        w = Window{wj[0].get<double>(), wj[1].get<double>()};
      } else {
        auto all = monitor_->recorded();
        if (all.empty()) return unprocessable("no recorded window available");
        w = all.back()->window;
      }
      t.recorded = monitor_->recorded(*w);
      if (!t.recorded) return unprocessable("window not retained by the monitor");
      if (!t.report) {
        t.report = evaluate_configuration(*pool_, monitor_->active(), *t.recorded, cfg_.monitor).report;
      }
    } else {
      if (!j.contains("requirement")) return unprocessable("field 'requirement' missing");
      t.requirement = requirement_from_json(j["requirement"]);
    }
  } catch (const Error& e) {
    return unprocessable(e.detail());
  } catch (const nlohmann::json::exception& e) {
    return unprocessable(e.what());
  }
  auto ticket = engine_->submit(std::move(t));
  return {202, {{"cycle_id", ticket.cycle_id}, {"coalesced", ticket.coalesced}}};
}

// ---- HTTP ---------------------------------------------------------------

void Service::start_http(const net::Address& address) {
  http_ = std::make_unique<httplib::Server>();
  // exclusive bind so that a port in use is reported instead of shared
  http_->set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto count = [](const httplib::Request& req) -> std::size_t {
    if (!req.has_param("n")) return 50;
    try {
      long long n = std::stoll(req.get_param_value("n"));
      return n < 0 ? 0 : static_cast<std::size_t>(n);
    } catch (...) {
      return 50;
    }
  };
  http_->Get("/api/status", [this, send](const httplib::Request&, httplib::Response& res) { send(res, {200, status_json()}); });
  http_->Get("/api/pool", [this, send](const httplib::Request&, httplib::Response& res) { send(res, {200, pool_json()}); });
  http_->Get(R"(/api/pool/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, pool_entry(req.matches[1]));
  });
  http_->Get("/api/configurations",
             [this, send](const httplib::Request&, httplib::Response& res) { send(res, {200, configurations_json()}); });
  http_->Get("/api/gap", [this, send, count](const httplib::Request& req, httplib::Response& res) {
    send(res, {200, gap_json(count(req))});
  });
  http_->Get("/api/history", [this, send, count](const httplib::Request& req, httplib::Response& res) {
    send(res, {200, history_json(count(req))});
  });
  http_->Get(R"(/api/history/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, history_entry(req.matches[1]));
  });
  http_->Post("/api/goal", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, post_goal(req.body)); });
  http_->Post("/api/trigger",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, post_trigger(req.body)); });
  http_->Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t last = 0;
    std::string resume = req.get_header_value("Last-Event-ID");
    if (resume.empty() && req.has_param("last_event_id")) resume = req.get_param_value("last_event_id");
    if (!resume.empty()) {
      try {
        last = std::stoull(resume);
      } catch (...) {
        last = 0;
      }
    }
    auto cursor = std::make_shared<std::uint64_t>(last);
    auto bus = bus_;
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, bus, cursor](std::size_t, httplib::DataSink& sink) {
      if (stopping_) return false;
      auto events = bus->wait_since(*cursor, std::chrono::milliseconds(500));
      if (events.empty()) {
        const std::string ping = ": keep-alive\n\n";
        return sink.write(ping.data(), ping.size());
      }
      for (const auto& e : events) {
        std::string chunk = "id: " + std::to_string(e.id) + "\nevent: " + e.type + "\ndata: " + e.data.dump() + "\n\n";
        if (!sink.write(chunk.data(), chunk.size())) return false;
        *cursor = e.id;
      }
      return true;
    });
  });

  if (address.port == 0) {
    http_port_ = http_->bind_to_any_port(address.host);
    if (http_port_ <= 0) throw Error(ErrorKind::ConfigError, "cannot bind " + address.host);
  } else {
    if (!http_->bind_to_port(address.host, address.port)) {
      http_.reset();
      throw Error(ErrorKind::ConfigError, "cannot bind " + address.str() + " (address in use?)");
    }
    http_port_ = address.port;
  }
  http_thread_ = std::jthread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

}  // namespace twinadapt
