#include "twinadapt/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "twinadapt/error.hpp"

namespace twinadapt {

namespace vacuum {

double pressure(double p_cap, double tau, double s) {
  if (s <= 0.0) return 0.0;
  return p_cap * (1.0 - std::exp(-s / tau));
}

double time_to_reach(double p_cap, double tau, double p_target) {
  if (p_target <= 0.0) return 0.0;
  if (p_target >= p_cap) return std::numeric_limits<double>::infinity();
  return -tau * std::log(1.0 - p_target / p_cap);
}

double holding_force(double p_kpa, double cup_area, double n_cups) { return p_kpa * 1000.0 * cup_area * n_cups; }

double required_force(double mass, double safety) { return mass * kGravity * safety; }

}  // namespace vacuum

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::vector<double>& port_events(const PortEvents& in, const std::string& port) {
  static const std::vector<double> kNone;
  auto it = in.find(port);
  return it == in.end() ? kNone : it->second;
}

}  // namespace

// ---- GripperD1 ----------------------------------------------------------

GripperD1::GripperD1(const ModelDescriptor& d, ParameterSet p) : ModelInstance(d, std::move(p)) {}

void GripperD1::reset() {
  phase_ = Phase::Idle;
  phase_end_ = 0.0;
  queue_.clear();
}

void GripperD1::start_next(double t) {
  if (queue_.empty()) {
    phase_ = Phase::Idle;
    return;
  }
  queue_.pop_front();
  phase_ = Phase::Approach;
  phase_end_ = t + param("t_approach");
}

void GripperD1::step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) {
  const double end = t + dt;
  const auto& inputs = port_events(in, "item_in");
  std::size_t next = 0;
  while (true) {
    const double internal = phase_ == Phase::Idle ? kInf : phase_end_;
    const double input = next < inputs.size() ? inputs[next] : kInf;
    if (std::min(internal, input) >= end) break;
    if (internal <= input) {
      const double now = phase_end_;
      switch (phase_) {
        case Phase::Approach:
          phase_ = Phase::Grip;
          phase_end_ = now + param("t_grip");
          break;
        case Phase::Grip:
          phase_ = Phase::Transfer;
          phase_end_ = now + param("t_transfer");
          break;
        case Phase::Transfer:
          phase_ = Phase::Release;
          phase_end_ = now + param("t_release");
          break;
        case Phase::Release:
          out.push_back({"pick_complete", now, 1.0, SignalKind::Event});
          start_next(now);
          break;
        case Phase::Idle:
          break;
      }
    } else {
      queue_.push_back(input);
      ++next;
      if (phase_ == Phase::Idle) start_next(input);
    }
  }
}

// ---- GripperD2 ----------------------------------------------------------

GripperD2::GripperD2(const ModelDescriptor& d, ParameterSet p) : ModelInstance(d, std::move(p)) {}

void GripperD2::reset() { pending_.clear(); }

void GripperD2::step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) {
  const double end = t + dt;
  const double delay = param("T_cycle");
  for (double ti : port_events(in, "item_in")) pending_.push_back(ti + delay);
  const bool success = param("grip_success") >= 0.5;
  while (!pending_.empty() && pending_.front() < end) {
    out.push_back({success ? "pick_complete" : "grip_failed", pending_.front(), 1.0, SignalKind::Event});
    pending_.pop_front();
  }
}

// ---- GripperD3 ----------------------------------------------------------

GripperD3::GripperD3(const ModelDescriptor& d, ParameterSet p) : ModelInstance(d, std::move(p)) {}

void GripperD3::reset() {
  phase_ = Phase::Idle;
  phase_end_ = 0.0;
  evac_start_ = 0.0;
  grip_ok_ = false;
  queue_.clear();
}

double GripperD3::pressure_at(double t) const {
  if (phase_ == Phase::Evacuate || phase_ == Phase::Transfer) {
    return vacuum::pressure(param("p_cap"), param("tau"), t - evac_start_);
  }
  return 0.0;
}

void GripperD3::start_next(double t) {
  if (queue_.empty()) {
    phase_ = Phase::Idle;
    return;
  }
  queue_.pop_front();
  phase_ = Phase::Approach;
  phase_end_ = t + param("t_approach");
}

void GripperD3::advance_to(double now, std::vector<PortFrame>& out) {
  switch (phase_) {
    case Phase::Approach: {
      phase_ = Phase::Evacuate;
      evac_start_ = now;
      const double s_grip = vacuum::time_to_reach(param("p_cap"), param("tau"), param("p_grip"));
      if (s_grip <= param("evac_timeout")) {
        const double force = vacuum::holding_force(param("p_grip"), param("cup_area"), param("n_cups"));
        grip_ok_ = force >= vacuum::required_force(param("mass"), param("safety"));
        phase_end_ = evac_start_ + s_grip;
      } else {
        grip_ok_ = false;
        phase_end_ = evac_start_ + param("evac_timeout");
      }
      break;
    }
    case Phase::Evacuate:
      if (grip_ok_) {
        phase_ = Phase::Transfer;
        phase_end_ = now + param("t_transfer");
      } else {
        out.push_back({"grip_failed", now, 1.0, SignalKind::Event});
        start_next(now);
      }
      break;
    case Phase::Transfer:
      phase_ = Phase::Release;
      phase_end_ = now + param("t_release");
      break;
    case Phase::Release:
      out.push_back({"pick_complete", now, 1.0, SignalKind::Event});
      start_next(now);
      break;
    case Phase::Idle:
      break;
  }
}

void GripperD3::step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) {
  out.push_back({"suction_pressure", t, pressure_at(t), SignalKind::Sample});
  const double end = t + dt;
  const auto& inputs = port_events(in, "item_in");
  std::size_t next = 0;
  while (true) {
    const double internal = phase_ == Phase::Idle ? kInf : phase_end_;
    const double input = next < inputs.size() ? inputs[next] : kInf;
    if (std::min(internal, input) >= end) break;
    if (internal <= input) {
      advance_to(phase_end_, out);
    } else {
      queue_.push_back(input);
      ++next;
      if (phase_ == Phase::Idle) start_next(input);
    }
  }
}

// ---- ConveyorD2 ---------------------------------------------------------

ConveyorD2::ConveyorD2(const ModelDescriptor& d, ParameterSet p) : ModelInstance(d, std::move(p)) {}

void ConveyorD2::reset() { pending_.clear(); }

void ConveyorD2::step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) {
  const double end = t + dt;
  const double delay = param("T_d");
  for (double ti : port_events(in, "item_in")) pending_.push_back(ti + delay);
  while (!pending_.empty() && pending_.front() < end) {
    out.push_back({"item_out", pending_.front(), 1.0, SignalKind::Event});
    pending_.pop_front();
  }
}

// ---- instantiate --------------------------------------------------------

namespace {

struct ParamRule {
  double fallback;
  double min;
  bool strictly_positive;
};

// Built-in defaults and physical validity per implementation.
const std::map<std::string, std::map<std::string, ParamRule>>& implementation_rules() {
  static const std::map<std::string, std::map<std::string, ParamRule>> rules = {
      {"gripper.d1",
       {{"t_approach", {0.5, 0.0, false}},
        {"t_grip", {0.4828, 0.0, false}},
        {"t_transfer", {1.5, 0.0, false}},
        {"t_release", {0.5, 0.0, false}}}},
      {"gripper.d2", {{"T_cycle", {2.9828, 0.0, false}}, {"grip_success", {1.0, 0.0, false}}}},
      {"gripper.d3",
       {{"p_cap", {60.0, 0.0, true}},
        {"tau", {0.3, 0.0, true}},
        {"p_grip", {48.0, 0.0, true}},
        {"cup_area", {7.07e-4, 0.0, true}},
        {"n_cups", {2.0, 0.0, true}},
        {"mass", {1.5, 0.0, true}},
        {"safety", {2.0, 0.0, true}},
        {"t_approach", {0.5, 0.0, false}},
        {"t_transfer", {1.5, 0.0, false}},
        {"t_release", {0.5, 0.0, false}},
        {"evac_timeout", {2.0, 0.0, true}}}},
      {"conveyor.d2", {{"T_d", {1.5, 0.0, false}}}},
  };
  return rules;
}

}  // namespace

std::unique_ptr<ModelInstance> instantiate(const ModelDescriptor& descriptor, const ParameterSet& params) {
  if (descriptor.depth < 1 || descriptor.depth > 3) {
    throw Error(ErrorKind::UnsupportedDepth, descriptor.id + " has depth " + std::to_string(descriptor.depth));
  }
  const std::string key = descriptor.implementation_key();
  const auto& rules = implementation_rules();
  auto rule_it = rules.find(key);
  if (rule_it == rules.end()) throw Error(ErrorKind::UnsupportedDepth, "no executable behavior '" + key + "'");

  for (const auto& [name, value] : params) {
    const Tunable* t = descriptor.find_tunable(name);
    if (!t) throw Error(ErrorKind::UnknownParameter, descriptor.id + "." + name);
    if (!(value >= t->lower && value <= t->upper)) throw Error(ErrorKind::ParamOutOfBounds, name);
  }

  ParameterSet resolved;
  for (const auto& [name, rule] : rule_it->second) resolved[name] = rule.fallback;
  for (const auto& [name, value] : descriptor.resolve(params)) resolved[name] = value;
  for (const auto& [name, rule] : rule_it->second) {
    const double v = resolved.at(name);
    if (!std::isfinite(v) || v < rule.min || (rule.strictly_positive && v <= 0.0)) {
      throw Error(ErrorKind::ParamOutOfBounds, name);
    }
  }

  if (key == "gripper.d1") return std::make_unique<GripperD1>(descriptor, std::move(resolved));
  if (key == "gripper.d2") return std::make_unique<GripperD2>(descriptor, std::move(resolved));
  if (key == "gripper.d3") return std::make_unique<GripperD3>(descriptor, std::move(resolved));
  return std::make_unique<ConveyorD2>(descriptor, std::move(resolved));
}

}  // namespace twinadapt
