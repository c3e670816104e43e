#pragma once

#include <atomic>
#include <chrono>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/models.hpp"
#include "twinadapt/net.hpp"

namespace twinadapt {

// Remote model protocol, one JSON object per line over TCP:
//   request  {"id","op":"simulate","model","params","window":[t0,t1],"dt","stimulus":[frame...]}
//   response {"id","ok":true,"trace":{...}} | {"id","ok":false,"error":"..."}
struct SimulateRequest {
  std::string id;
  std::string model;
  ParameterSet params;
  Window window;
  double dt = kDefaultMacroStep;
  std::vector<SignalFrame> stimulus;
};

nlohmann::json request_to_json(const SimulateRequest& req);
// Throws Error(ProtocolError) naming the offending field.
SimulateRequest request_from_json(const nlohmann::json& j);

struct RemoteOptions {
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds timeout{30000};
};

// Unique per process; used as the correlation id.
std::string next_request_id();

SimTrace remote_simulate(const std::string& endpoint, const SimulateRequest& request, const RemoteOptions& options = {});

// Local execution for models without an endpoint, remote_simulate otherwise.
ModelRunner default_model_runner(RemoteOptions options = {});

// Serves simulate requests for the models of its pool; one thread per connection.
class RemoteModelServer {
 public:
  RemoteModelServer(std::shared_ptr<const ModelPool> pool, const net::Address& address);
  ~RemoteModelServer();
  RemoteModelServer(const RemoteModelServer&) = delete;
  RemoteModelServer& operator=(const RemoteModelServer&) = delete;

  int port() const { return port_; }
  std::string endpoint() const;
  void stop();

  // Handles one request line and returns the response line.
  std::string handle_line(const std::string& line) const;

 private:
  void accept_loop(std::stop_token st);
  void serve(net::LineStream stream, std::stop_token st);

  std::shared_ptr<const ModelPool> pool_;
  std::string host_;
  net::Listener listener_;
  int port_ = 0;
  std::mutex mutex_;
  std::list<std::jthread> connections_;
  std::jthread acceptor_;
};

}  // namespace twinadapt
