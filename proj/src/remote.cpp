#include "twinadapt/remote.hpp"

#include "twinadapt/error.hpp"

namespace twinadapt {

nlohmann::json request_to_json(const SimulateRequest& req) {
  nlohmann::json j;
  j["id"] = req.id;
  j["op"] = "simulate";
  j["model"] = req.model;
  j["params"] = req.params;
  j["window"] = {req.window.t0, req.window.t1};
  j["dt"] = req.dt;
  j["stimulus"] = nlohmann::json::array();
  for (const auto& f : req.stimulus) j["stimulus"].push_back(frame_to_json(f));
  return j;
}

SimulateRequest request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ProtocolError, "request is not a JSON object");
  auto require = [&](const char* name) -> const nlohmann::json& {
    auto it = j.find(name);
    if (it == j.end()) throw Error(ErrorKind::ProtocolError, std::string("field '") + name + "' missing");
    return *it;
  };
  SimulateRequest req;
  const auto& id = require("id");
  if (!id.is_string()) throw Error(ErrorKind::ProtocolError, "field 'id' must be a string");
  req.id = id.get<std::string>();
  const auto& op = require("op");
  if (!op.is_string() || op.get<std::string>() != "simulate") {
    throw Error(ErrorKind::ProtocolError, "field 'op' must be \"simulate\"");
  }
  const auto& model = require("model");
  if (!model.is_string()) throw Error(ErrorKind::ProtocolError, "field 'model' must be a string");
  req.model = model.get<std::string>();
  if (auto p = j.find("params"); p != j.end()) {
    if (!p->is_object()) throw Error(ErrorKind::ProtocolError, "field 'params' must be an object");
    for (const auto& [name, value] : p->items()) {
      if (!value.is_number()) throw Error(ErrorKind::ProtocolError, "field 'params." + name + "' must be a number");
      req.params[name] = value.get<double>();
    }
  }
  const auto& w = require("window");
  if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
    throw Error(ErrorKind::ProtocolError, "field 'window' must be [t0, t1]");
  }
  req.window = {w[0].get<double>(), w[1].get<double>()};
  const auto& dt = require("dt");
  if (!dt.is_number()) throw Error(ErrorKind::ProtocolError, "field 'dt' must be a number");
  req.dt = dt.get<double>();
  const auto& stim = require("stimulus");
  if (!stim.is_array()) throw Error(ErrorKind::ProtocolError, "field 'stimulus' must be an array");
  for (const auto& f : stim) req.stimulus.push_back(frame_from_json(f));
  return req;
}

std::string next_request_id() {
  static std::atomic<unsigned long long> counter{0};
  return "req-" + std::to_string(++counter);
}

SimTrace remote_simulate(const std::string& endpoint, const SimulateRequest& request, const RemoteOptions& options) {
  auto stream = net::LineStream::connect(net::parse_address(endpoint), options.connect_timeout);
  if (!stream.write_line(request_to_json(request).dump())) {
    throw Error(ErrorKind::Unreachable, endpoint + ": connection closed while sending");
  }
  auto line = stream.read_line(options.timeout);
  if (!line) throw Error(ErrorKind::ProtocolError, "connection closed before response");
  nlohmann::json j = nlohmann::json::parse(*line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::ProtocolError, "response is not a JSON object");
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw Error(ErrorKind::ProtocolError, "field 'id' missing or not a string");
  if (id->get<std::string>() != request.id) throw Error(ErrorKind::ProtocolError, "field 'id' does not match request");
  auto ok = j.find("ok");
  if (ok == j.end() || !ok->is_boolean()) throw Error(ErrorKind::ProtocolError, "field 'ok' missing or not a boolean");
  if (!ok->get<bool>()) {
    auto err = j.find("error");
    throw Error(ErrorKind::RemoteSimulationError,
                err != j.end() && err->is_string() ? err->get<std::string>() : std::string("unspecified"));
  }
  auto trace = j.find("trace");
  if (trace == j.end()) throw Error(ErrorKind::ProtocolError, "field 'trace' missing");
  return trace_from_json(*trace);
}

ModelRunner default_model_runner(RemoteOptions options) {
  return [options](const ModelDescriptor& d, const ParameterSet& params, const SimTrace& stimulus, Window window,
                   double dt) {
    if (!d.endpoint) return simulate_single(d, params, stimulus, window, dt);
    SimulateRequest req;
    req.id = next_request_id();
    req.model = d.id;
    req.params = params;
    req.window = window;
    req.dt = dt;
    req.stimulus = stimulus.frames();
    return remote_simulate(*d.endpoint, req, options);
  };
}

RemoteModelServer::RemoteModelServer(std::shared_ptr<const ModelPool> pool, const net::Address& address)
    : pool_(std::move(pool)), host_(address.host), listener_(net::Listener::bind(address)) {
  port_ = listener_.port();
  acceptor_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
}

RemoteModelServer::~RemoteModelServer() { stop(); }

std::string RemoteModelServer::endpoint() const { return host_ + ":" + std::to_string(port_); }

void RemoteModelServer::stop() {
  if (acceptor_.joinable()) {
    acceptor_.request_stop();
    acceptor_.join();
  }
  std::list<std::jthread> conns;
  {
    std::lock_guard lock(mutex_);
    conns.swap(connections_);
  }
  for (auto& c : conns) c.request_stop();
  conns.clear();
  listener_.close();
}

void RemoteModelServer::accept_loop(std::stop_token st) {
  while (!st.stop_requested()) {
    auto stream = listener_.accept(std::chrono::milliseconds(50));
    if (!stream) continue;
    std::lock_guard lock(mutex_);
    connections_.emplace_back([this, s = std::move(*stream)](std::stop_token cst) mutable { serve(std::move(s), cst); });
  }
}

void RemoteModelServer::serve(net::LineStream stream, std::stop_token st) {
  while (!st.stop_requested()) {
    if (!stream.poll_readable(std::chrono::milliseconds(50))) continue;
    auto line = stream.read_line();
    if (!line) return;
    if (line->empty()) continue;
    if (!stream.write_line(handle_line(*line))) return;
  }
}

std::string RemoteModelServer::handle_line(const std::string& line) const {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  std::string id;
  if (!j.is_discarded() && j.is_object()) {
    if (auto it = j.find("id"); it != j.end() && it->is_string()) id = it->get<std::string>();
  }
  nlohmann::json resp;
  resp["id"] = id;
  try {
    if (j.is_discarded()) throw Error(ErrorKind::ProtocolError, "request is not valid JSON");
    SimulateRequest req = request_from_json(j);
    const ModelDescriptor& d = pool_->get(req.model);
    SimTrace stimulus = trace_from_frames(req.stimulus, req.window);
    SimTrace trace = simulate_single(d, req.params, stimulus, req.window, req.dt);
    resp["ok"] = true;
    resp["trace"] = trace_to_json(trace);
  } catch (const std::exception& e) {
    resp["ok"] = false;
    resp["error"] = e.what();
  }
  return resp.dump();
}

}  // namespace twinadapt
