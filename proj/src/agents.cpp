#include "twinadapt/agents.hpp"

namespace twinadapt {

std::uint64_t EventBus::publish(std::string type, nlohmann::json data) {
  std::uint64_t id;
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
    events_.push_back({id, std::move(type), std::move(data)});
    while (events_.size() > retain_) events_.pop_front();
  }
  cv_.notify_all();
  return id;
}

std::vector<BusEvent> EventBus::since(std::uint64_t after) const {
  std::lock_guard lock(mutex_);
  std::vector<BusEvent> out;
  for (const auto& e : events_) {
    if (e.id > after) out.push_back(e);
  }
  return out;
}

std::vector<BusEvent> EventBus::wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const {
  {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return next_id_ - 1 > after; });
  }
  return since(after);
}

std::uint64_t EventBus::last_id() const {
  std::lock_guard lock(mutex_);
  return next_id_ - 1;
}

PartialModelAgents::PartialModelAgents(ModelRunner inner) : inner_(std::move(inner)) {}

PartialModelAgents::~PartialModelAgents() {
  std::lock_guard lock(mutex_);
  agents_.clear();
}

PartialModelAgents::Agent& PartialModelAgents::agent_for(const std::string& model_id) {
  std::lock_guard lock(mutex_);
  auto& slot = agents_[model_id];
  if (!slot) {
    slot = std::make_unique<Agent>([this](Job job) {
      try {
        job.done->set_value(inner_(job.descriptor, job.params, job.stimulus, job.window, job.dt));
      } catch (...) {
        job.done->set_exception(std::current_exception());
      }
    });
  }
  return *slot;
}

ModelRunner PartialModelAgents::runner() {
  return [this](const ModelDescriptor& d, const ParameterSet& params, const SimTrace& stimulus, Window window,
                double dt) {
    auto done = std::make_shared<std::promise<SimTrace>>();
    auto result = done->get_future();
    agent_for(d.id).post(Job{d, params, stimulus, window, dt, done});
    return result.get();
  };
}

std::size_t PartialModelAgents::agent_count() const {
  std::lock_guard lock(mutex_);
  return agents_.size();
}

}  // namespace twinadapt
