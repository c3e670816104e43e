#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "twinadapt/error.hpp"
#include "twinadapt/models.hpp"
#include "twinadapt/remote.hpp"

namespace twinadapt {

namespace {

// Step start times. When t0 lies on the dt lattice the times are n*dt, which coincide
// exactly with samples taken at integer multiples of dt (or of 2*dt, 4*dt, ...).
struct StepGrid {
  double t0;
  double dt;
  double n0 = 0.0;
  bool lattice = false;

  StepGrid(double start, double step) : t0(start), dt(step) {
    n0 = std::round(start / step);
    lattice = std::abs(n0 * step - start) <= 1e-9 * std::max(1.0, std::abs(start));
  }
  double at(std::size_t j) const {
    return lattice ? (n0 + static_cast<double>(j)) * dt : t0 + static_cast<double>(j) * dt;
  }
};

std::size_t step_count(const StepGrid& grid, double t1) {
  std::size_t n = 0;
  while (grid.at(n) < t1) ++n;
  return n;
}

void check_finite(const SignalFrame& f) {
  if (!std::isfinite(f.value) || !std::isfinite(f.t)) {
    std::ostringstream os;
    os << "signal '" << f.signal << "' at t=" << f.t;
    throw Error(ErrorKind::NumericalFailure, os.str());
  }
}

void check_step_args(Window window, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidRequest, "dt must be > 0");
  if (!(window.t1 > window.t0)) throw Error(ErrorKind::InvalidRequest, "window must satisfy t1 > t0");
}

}  // namespace

bool CompositeModel::has_remote() const {
  return std::any_of(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.instance->descriptor().endpoint.has_value(); });
}

void CompositeModel::reset() {
  for (auto& n : nodes_) n.instance->reset();
}

std::map<std::string, SignalKind> CompositeModel::declared_outputs() const {
  std::map<std::string, SignalKind> out;
  for (const auto& n : nodes_) {
    for (const auto& p : n.instance->descriptor().ports) {
      if (p.direction != PortDirection::Out) continue;
      out[p.signal] = p.kind;
    }
  }
  return out;
}

TagSet CompositeModel::stimulus_signals() const {
  TagSet out;
  for (const auto& n : nodes_) {
    for (const auto& p : n.instance->descriptor().ports) {
      if (p.direction != PortDirection::In) continue;
      bool coupled = std::any_of(config_.couplings.begin(), config_.couplings.end(), [&](const Coupling& c) {
        return c.to_slot == n.slot && c.to_port == p.name;
      });
      if (!coupled) out.insert(p.signal);
    }
  }
  return out;
}

SimTrace CompositeModel::simulate(const SimTrace& stimulus, Window window, double dt) {
  if (has_remote()) return simulate_decentralized(stimulus, window, dt, default_model_runner());
  return simulate_steps(stimulus, window, dt);
}

SimTrace CompositeModel::simulate_steps(const SimTrace& stimulus, Window window, double dt) {
  check_step_args(window, dt);
  reset();

  struct InputFeed {
    const std::vector<double>* times = nullptr;
    std::size_t next = 0;
  };
  // Per node: uncoupled in-port -> stimulus event feed.
  std::vector<std::map<std::string, InputFeed>> feeds(nodes_.size());
  // (node, out-port) -> downstream (node, in-port)
  std::map<std::pair<std::size_t, std::string>, std::vector<std::pair<std::size_t, std::string>>> routes;
  std::map<std::string, std::size_t> slot_index;
  for (std::size_t i = 0; i < nodes_.size(); ++i) slot_index[nodes_[i].slot] = i;
  for (const auto& c : config_.couplings) {
    routes[{slot_index.at(c.from_slot), c.from_port}].emplace_back(slot_index.at(c.to_slot), c.to_port);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& p : nodes_[i].instance->descriptor().ports) {
      if (p.direction != PortDirection::In) continue;
      bool coupled = std::any_of(config_.couplings.begin(), config_.couplings.end(), [&](const Coupling& c) {
        return c.to_slot == nodes_[i].slot && c.to_port == p.name;
      });
      if (coupled) continue;
      InputFeed feed;
      if (const Series* s = stimulus.find(p.signal); s && s->kind == SignalKind::Event) feed.times = &s->t;
      if (feed.times) {
        while (feed.next < feed.times->size() && (*feed.times)[feed.next] < window.t0) ++feed.next;
      }
      feeds[i][p.name] = feed;
    }
  }

  SimTrace trace;
  trace.window = window;
  for (const auto& [signal, kind] : declared_outputs()) trace.declare(signal, kind);

  const StepGrid grid(window.t0, dt);
  const std::size_t n_steps = step_count(grid, window.t1);
  std::vector<PortEvents> forwarded(nodes_.size());
  std::vector<PortFrame> produced;
  for (std::size_t j = 0; j < n_steps; ++j) {
    const double t = grid.at(j);
    const double end = grid.at(j + 1);
    for (auto& f : forwarded) f.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      PortEvents in = std::move(forwarded[i]);
      for (auto& [port, feed] : feeds[i]) {
        if (!feed.times) continue;
        auto& dst = in[port];
        while (feed.next < feed.times->size() && (*feed.times)[feed.next] < end) {
          const double te = (*feed.times)[feed.next++];
          if (te < window.t1) dst.push_back(te);
        }
      }
      for (auto& [port, times] : in) std::sort(times.begin(), times.end());

      produced.clear();
      nodes_[i].instance->step(t, end - t, in, produced);
      const ModelDescriptor& d = nodes_[i].instance->descriptor();
      for (const auto& pf : produced) {
        const Port* port = d.find_port(pf.port);
        if (!port || port->direction != PortDirection::Out) continue;  // undeclared output
        SignalFrame frame{pf.t, port->signal, pf.value, pf.kind};
        check_finite(frame);
        if (frame.t < window.t1) trace.add(frame);
        if (pf.kind != SignalKind::Event) continue;
        if (auto r = routes.find({i, pf.port}); r != routes.end()) {
          for (const auto& [target, in_port] : r->second) forwarded[target][in_port].push_back(pf.t);
        }
      }
    }
  }
  return trace;
}

SimTrace CompositeModel::simulate_decentralized(const SimTrace& stimulus, Window window, double dt,
                                                const ModelRunner& runner) {
  check_step_args(window, dt);
  SimTrace trace;
  trace.window = window;
  for (const auto& [signal, kind] : declared_outputs()) trace.declare(signal, kind);

  std::map<std::string, SimTrace> outputs;  // slot -> that model's output trace
  std::map<std::string, const ModelDescriptor*> by_slot;
  for (const auto& node : nodes_) {
    const ModelDescriptor& d = node.instance->descriptor();
    by_slot[node.slot] = &d;
    SimTrace local;
    local.window = window;
    for (const auto& p : d.ports) {
      if (p.direction != PortDirection::In) continue;
      auto c = std::find_if(config_.couplings.begin(), config_.couplings.end(),
                            [&](const Coupling& cp) { return cp.to_slot == node.slot && cp.to_port == p.name; });
      const Series* src = nullptr;
      if (c != config_.couplings.end()) {
        const Port* from = by_slot.at(c->from_slot)->find_port(c->from_port);
        src = outputs.at(c->from_slot).find(from->signal);
      } else {
        src = stimulus.find(p.signal);
      }
      local.declare(p.signal, SignalKind::Event);
      if (!src || src->kind != SignalKind::Event) continue;
      for (std::size_t k = 0; k < src->size(); ++k) {
        if (window.contains(src->t[k])) local.add({src->t[k], p.signal, src->v[k], SignalKind::Event});
      }
    }
    SimTrace out = runner(d, config_.bindings.at(node.slot).params, local, window, dt);
    for (const auto& f : out.frames()) {
      check_finite(f);
      if (window.contains(f.t)) trace.add(f);
    }
    outputs[node.slot] = std::move(out);
  }
  return trace;
}

CompositeModel compose(const ModelConfiguration& config, const ModelPool& pool) {
  for (const auto& [slot, b] : config.bindings) pool.get(b.model_id);  // UnknownModelId
  auto violations = pool.validate_configuration(config);
  for (const auto& v : violations) {
    if (v.rule == "algebraic loop") throw Error(ErrorKind::AlgebraicLoop, config.id);
  }
  if (!violations.empty()) {
    throw Error(ErrorKind::InvalidConfiguration, config.id + ": " + violations.front().rule + " (" + violations.front().detail + ")");
  }

  // Kahn's algorithm; ready slots taken in name order for determinism.
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> edges;
  for (const auto& [slot, _] : config.bindings) indegree[slot] = 0;
  for (const auto& c : config.couplings) {
    edges[c.from_slot].push_back(c.to_slot);
    ++indegree[c.to_slot];
  }
  CompositeModel composite;
  composite.config_ = config;
  std::set<std::string> ready;
  for (const auto& [slot, deg] : indegree) {
    if (deg == 0) ready.insert(slot);
  }
  while (!ready.empty()) {
    std::string slot = *ready.begin();
    ready.erase(ready.begin());
    const ModelBinding& b = config.bindings.at(slot);
    composite.nodes_.push_back({slot, instantiate(pool.get(b.model_id), b.params)});
    for (const auto& next : edges[slot]) {
      if (--indegree[next] == 0) ready.insert(next);
    }
  }
  if (composite.nodes_.size() != config.bindings.size()) throw Error(ErrorKind::AlgebraicLoop, config.id);
  return composite;
}

SimTrace simulate(CompositeModel& composite, const SimTrace& stimulus, Window window, double dt) {
  const auto start = std::chrono::steady_clock::now();
  SimTrace trace = composite.simulate(stimulus, window, dt);
  trace.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

SimTrace simulate_single(const ModelDescriptor& descriptor, const ParameterSet& params, const SimTrace& stimulus,
                         Window window, double dt) {
  ModelConfiguration config;
  config.id = descriptor.id;
  config.bindings[descriptor.slot] = ModelBinding{descriptor.id, params};
  ModelPool pool;
  ModelDescriptor local = descriptor;
  local.endpoint.reset();
  pool.register_model(std::move(local));
  CompositeModel composite = compose(config, pool);
  return simulate(composite, stimulus, window, dt);
}

}  // namespace twinadapt
