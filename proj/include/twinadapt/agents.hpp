#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/models.hpp"

namespace twinadapt {

// Sequential message processor: one thread draining a FIFO into a handler.
template <class Message>
class Mailbox {
 public:
  using Handler = std::function<void(Message)>;

  explicit Mailbox(Handler handler) : handler_(std::move(handler)) {
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
  }
  ~Mailbox() { stop(); }
  Mailbox(const Mailbox&) = delete;
  Mailbox& operator=(const Mailbox&) = delete;

  void post(Message msg) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

  // Messages still queued are discarded.
  void stop() {
    if (!thread_.joinable()) return;
    thread_.request_stop();
    cv_.notify_all();
    thread_.join();
  }

 private:
  void loop(std::stop_token st) {
    while (true) {
      Message msg;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, st, [this] { return !queue_.empty(); });
        if (st.stop_requested()) return;
        msg = std::move(queue_.front());
        queue_.pop_front();
      }
      handler_(std::move(msg));
    }
  }

  Handler handler_;
  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<Message> queue_;
  std::jthread thread_;
};

struct BusEvent {
  std::uint64_t id = 0;
  std::string type;
  nlohmann::json data;
};

// Ordered engine/monitor event stream with monotonically increasing ids.
// Keeps the most recent events so that readers can resume after a given id.
class EventBus {
 public:
  explicit EventBus(std::size_t retain = 10000) : retain_(retain) {}

  std::uint64_t publish(std::string type, nlohmann::json data);
  // Events with id > after, oldest first.
  std::vector<BusEvent> since(std::uint64_t after) const;
  // Blocks until an event with id > after exists or the timeout passes.
  std::vector<BusEvent> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;
  std::uint64_t last_id() const;

 private:
  std::size_t retain_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::deque<BusEvent> events_;
  std::uint64_t next_id_ = 1;
};

// One agent per model: every execution of that model is serialized through its mailbox.
// Remote models are reached through the wrapped runner (default_model_runner by default).
class PartialModelAgents {
 public:
  explicit PartialModelAgents(ModelRunner inner);
  ~PartialModelAgents();

  // A runner that dispatches each model run to the owning agent and waits for it.
  ModelRunner runner();
  std::size_t agent_count() const;

 private:
  struct Job {
    ModelDescriptor descriptor;
    ParameterSet params;
    SimTrace stimulus;
    Window window;
    double dt = 0.0;
    std::shared_ptr<std::promise<SimTrace>> done;
  };
  using Agent = Mailbox<Job>;

  Agent& agent_for(const std::string& model_id);

  ModelRunner inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Agent>> agents_;
};

}  // namespace twinadapt
