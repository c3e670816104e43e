#include "twinadapt/plant.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "twinadapt/error.hpp"
#include "twinadapt/models.hpp"

namespace twinadapt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::set<std::string>& strictly_positive() {
  static const std::set<std::string> names = {"p_cap", "tau",  "p_grip", "cup_area",
                                              "n_cups", "mass", "safety", "evac_timeout"};
  return names;
}

bool physical(const std::string& name, double value) {
  if (!std::isfinite(value) || value < 0.0) return false;
  return !(strictly_positive().count(name) && value <= 0.0);
}

}  // namespace

std::vector<double> ArrivalSchedule::arrivals(double duration) const {
  std::vector<double> out;
  if (!times.empty()) {
    for (double t : times) {
      if (t >= 0.0 && t < duration) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  for (std::size_t k = 0;; ++k) {
    const double t = offset + static_cast<double>(k) * period;
    if (t >= duration) break;
    out.push_back(t);
  }
  return out;
}

const ParameterSet& plant_nominal_parameters() {
  static const ParameterSet params = {
      {"T_d", 1.5},        {"p_cap", 60.0},      {"tau", 0.3},        {"p_grip", 48.0},
      {"cup_area", 7.07e-4}, {"n_cups", 2.0},    {"mass", 1.5},       {"safety", 2.0},
      {"t_approach", 0.5}, {"t_transfer", 1.5},  {"t_release", 0.5},  {"evac_timeout", 2.0},
  };
  return params;
}

bool is_plant_parameter(const std::string& name) { return plant_nominal_parameters().count(name) > 0; }

void validate_scenario(const PlantScenario& s) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidScenario, why); };
  if (!(s.duration > 0.0) || !std::isfinite(s.duration)) fail("duration must be > 0");
  if (!(s.sample_period > 0.0)) fail("sample_period must be > 0");
  if (!(s.noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (s.schedule.times.empty() && !(s.schedule.period > 0.0)) fail("schedule period must be > 0");
  for (const auto& [name, value] : s.params) {
    if (!is_plant_parameter(name)) fail("unknown plant parameter '" + name + "'");
    if (!physical(name, value)) fail("parameter '" + name + "' out of physical bounds");
  }
  for (const auto& f : s.faults) {
    if (!(f.t >= 0.0 && f.t <= s.duration)) fail("fault time outside [0, duration]");
    if (!is_plant_parameter(f.parameter)) fail("fault names unknown parameter '" + f.parameter + "'");
    if (!physical(f.parameter, f.value)) fail("fault value for '" + f.parameter + "' out of physical bounds");
  }
}

PlantScenario scenario_from_toml(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::InvalidScenario, std::string(e.description()));
  }
  auto number = [](const toml::node& n, const std::string& key) {
    if (auto v = n.value<double>()) return *v;
    throw Error(ErrorKind::InvalidScenario, "'" + key + "' must be a number");
  };

  PlantScenario s;
  if (auto* plant = root["plant"].as_table()) {
    for (const auto& [k, node] : *plant) {
      const std::string key(k.str());
      if (key == "seed") {
        auto v = node.value<int64_t>();
        if (!v || *v < 0) throw Error(ErrorKind::InvalidScenario, "'seed' must be a nonnegative integer");
        s.seed = static_cast<std::uint64_t>(*v);
      } else if (key == "duration") {
        s.duration = number(node, key);
      } else if (key == "sample_period") {
        s.sample_period = number(node, key);
      } else if (key == "noise_sigma") {
        s.noise_sigma = number(node, key);
      } else {
        s.params[key] = number(node, key);
      }
    }
  }
  if (auto* sched = root["schedule"].as_table()) {
    if (auto* period = sched->get("period")) s.schedule.period = number(*period, "period");
    if (auto* offset = sched->get("offset")) s.schedule.offset = number(*offset, "offset");
    if (auto* times = sched->get_as<toml::array>("times")) {
      for (const auto& t : *times) s.schedule.times.push_back(number(t, "times"));
    }
  }
  if (auto* faults = root["fault"].as_array()) {
    for (const auto& item : *faults) {
      const auto* f = item.as_table();
      if (!f) throw Error(ErrorKind::InvalidScenario, "[[fault]] entries must be tables");
      FaultInjection fi;
      const auto* t = f->get("t");
      const auto* value = f->get("value");
      auto param = f->get_as<std::string>("parameter");
      if (!t || !value || !param) throw Error(ErrorKind::InvalidScenario, "fault needs t, parameter and value");
      fi.t = number(*t, "t");
      fi.parameter = param->get();
      fi.value = number(*value, "value");
      s.faults.push_back(fi);
    }
  }
  validate_scenario(s);
  return s;
}

PlantScenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidScenario, "cannot open scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_toml(ss.str());
}

Plant::Plant(PlantScenario scenario) : scenario_(std::move(scenario)), rng_(scenario_.seed) {
  validate_scenario(scenario_);
  params_ = plant_nominal_parameters();
  for (const auto& [k, v] : scenario_.params) params_[k] = v;
  arrivals_ = scenario_.schedule.arrivals(scenario_.duration);
  faults_ = scenario_.faults;
  std::stable_sort(faults_.begin(), faults_.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
}

void Plant::apply(const std::string& parameter, double value) { params_[parameter] = value; }

void Plant::inject(const std::string& parameter, double value) {
  if (!is_plant_parameter(parameter)) throw Error(ErrorKind::UnknownParameter, parameter);
  if (!physical(parameter, value)) throw Error(ErrorKind::ParamOutOfBounds, parameter);
  apply(parameter, value);
}

double Plant::pressure(double t) const {
  if (phase_ == Phase::Evacuate || phase_ == Phase::Transfer) {
    return vacuum::pressure(evac_p_cap_, evac_tau_, t - evac_start_);
  }
  return 0.0;
}

double Plant::next_internal() const { return phase_ == Phase::Idle ? kInf : phase_end_; }

void Plant::start_next(double t) {
  if (queue_.empty()) {
    phase_ = Phase::Idle;
    return;
  }
  queue_.pop_front();
  phase_ = Phase::Approach;
  phase_end_ = t + p("t_approach");
}

void Plant::advance_gripper(std::vector<SignalFrame>& out) {
  const double now = phase_end_;
  switch (phase_) {
    case Phase::Approach: {
      phase_ = Phase::Evacuate;
      evac_start_ = now;
      evac_p_cap_ = p("p_cap");
      evac_tau_ = p("tau");
      const double s_grip = vacuum::time_to_reach(evac_p_cap_, evac_tau_, p("p_grip"));
      if (s_grip <= p("evac_timeout")) {
        const double force = vacuum::holding_force(p("p_grip"), p("cup_area"), p("n_cups"));
        grip_ok_ = force >= vacuum::required_force(p("mass"), p("safety"));
        phase_end_ = evac_start_ + s_grip;
      } else {
        grip_ok_ = false;
        phase_end_ = evac_start_ + p("evac_timeout");
      }
      break;
    }
    case Phase::Evacuate:
      if (grip_ok_) {
        phase_ = Phase::Transfer;
        phase_end_ = now + p("t_transfer");
      } else {
        out.push_back({now, signals::kGripFailed, 1.0, SignalKind::Event});
        start_next(now);
      }
      break;
    case Phase::Transfer:
      phase_ = Phase::Release;
      phase_end_ = now + p("t_release");
      break;
    case Phase::Release:
      out.push_back({now, signals::kPickComplete, 1.0, SignalKind::Event});
      start_next(now);
      break;
    case Phase::Idle:
      break;
  }
}

void Plant::run_until(double t, std::vector<SignalFrame>& out) {
  const double limit = std::min(t, scenario_.duration);
  if (limit <= now_) return;
  // Tie order: sample, fault, gripper phase end, conveyor exit, arrival.
  enum Source { Sample, Fault, Gripper, Conveyor, Arrival, None };
  while (true) {
    const double ts = static_cast<double>(next_sample_) * scenario_.sample_period;
    const double candidates[] = {
        ts,
        next_fault_ < faults_.size() ? faults_[next_fault_].t : kInf,
        next_internal(),
        conveyor_.empty() ? kInf : conveyor_.front(),
        next_arrival_ < arrivals_.size() ? arrivals_[next_arrival_] : kInf,
    };
    Source src = None;
    double when = kInf;
    for (int i = 0; i < 5; ++i) {
      if (candidates[i] < when) {
        when = candidates[i];
        src = static_cast<Source>(i);
      }
    }
    if (src == None || when >= limit) break;
    switch (src) {
      case Sample: {
        double value = pressure(when);
        if (scenario_.noise_sigma > 0.0) value += scenario_.noise_sigma * noise_(rng_);
        out.push_back({when, signals::kSuctionPressure, value, SignalKind::Sample});
        ++next_sample_;
        break;
      }
      case Fault:
        apply(faults_[next_fault_].parameter, faults_[next_fault_].value);
        ++next_fault_;
        break;
      case Gripper:
        advance_gripper(out);
        break;
      case Conveyor:
        conveyor_.pop_front();
        out.push_back({when, signals::kConveyorItemOut, 1.0, SignalKind::Event});
        out.push_back({when, signals::kItemAtGripper, 1.0, SignalKind::Event});
        queue_.push_back(when);
        if (phase_ == Phase::Idle) start_next(when);
        break;
      case Arrival:
        ++next_arrival_;
        out.push_back({when, signals::kItemArrival, 1.0, SignalKind::Event});
        conveyor_.push_back(when + p("T_d"));
        break;
      case None:
        break;
    }
  }
  now_ = limit;
}

std::vector<SignalFrame> run_plant_batch(const PlantScenario& scenario) {
  Plant plant(scenario);
  std::vector<SignalFrame> out;
  plant.run_until(plant.duration(), out);
  return out;
}

namespace {

std::string handle_control(Plant& plant, const std::string& line) {
  nlohmann::json resp;
  try {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::ProtocolError, "control line is not a JSON object");
    if (j.value("op", "") != "inject") throw Error(ErrorKind::ProtocolError, "field 'op' must be \"inject\"");
    if (!j.contains("param") || !j["param"].is_string()) throw Error(ErrorKind::ProtocolError, "field 'param' missing");
    if (!j.contains("value") || !j["value"].is_number()) throw Error(ErrorKind::ProtocolError, "field 'value' missing");
    plant.inject(j["param"].get<std::string>(), j["value"].get<double>());
    resp["ok"] = true;
  } catch (const std::exception& e) {
    resp["ok"] = false;
    resp["error"] = e.what();
  }
  return resp.dump();
}

}  // namespace

void serve_plant(Plant& plant, net::LineStream& stream, double speed, const std::function<bool()>& stop) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double t_start = plant.now();
  std::vector<SignalFrame> frames;
  while (!plant.finished() && !stop()) {
    double target;
    if (speed > 0.0) {
      const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
      target = t_start + speed * elapsed;
    } else {
      target = plant.now() + 1.0;
    }
    frames.clear();
    plant.run_until(target, frames);
    for (const auto& f : frames) {
      if (!stream.write_line(frame_to_line(f))) return;
    }
    const auto wait = speed > 0.0 ? std::chrono::milliseconds(10) : std::chrono::milliseconds(0);
    while (stream.poll_readable(wait)) {
      auto line = stream.read_line(std::chrono::milliseconds(100));
      if (!line) return;
      if (line->empty()) continue;
      if (!stream.write_line(handle_control(plant, *line))) return;
    }
  }
}

}  // namespace twinadapt
