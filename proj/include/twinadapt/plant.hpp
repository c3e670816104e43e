#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twinadapt/net.hpp"
#include "twinadapt/pool.hpp"
#include "twinadapt/signal.hpp"

namespace twinadapt {

struct FaultInjection {
  double t = 0.0;
  std::string parameter;
  double value = 0.0;
};

// Explicit times win over the periodic rule when non-empty.
struct ArrivalSchedule {
  double period = 10.0;
  double offset = 5.0;
  std::vector<double> times;

  std::vector<double> arrivals(double duration) const;
};

struct PlantScenario {
  ParameterSet params;  // overlaid on plant_nominal_parameters()
  ArrivalSchedule schedule;
  std::vector<FaultInjection> faults;
  std::uint64_t seed = 0;
  double duration = 0.0;
  double sample_period = 0.1;
  double noise_sigma = 0.0;  // kPa, suction_pressure only
};

// True plant parameters before any scenario override (conveyor T_d plus the vacuum gripper set).
const ParameterSet& plant_nominal_parameters();
bool is_plant_parameter(const std::string& name);

// Throws InvalidScenario.
void validate_scenario(const PlantScenario& scenario);
PlantScenario load_scenario(const std::string& path);
PlantScenario scenario_from_toml(const std::string& text);

// Event-driven ground-truth plant. Parameter changes take effect at the next conveyor
// entry (T_d) or at the next phase start; an evacuation in progress keeps its parameters.
class Plant {
 public:
  explicit Plant(PlantScenario scenario);

  double now() const { return now_; }
  double duration() const { return scenario_.duration; }
  bool finished() const { return now_ >= scenario_.duration; }
  const ParameterSet& parameters() const { return params_; }

  // Processes everything with time < t (capped at the duration) and appends the frames.
  // At equal times samples are emitted before events.
  void run_until(double t, std::vector<SignalFrame>& out);
  // Live fault at now(). Throws UnknownParameter or InvalidScenario for a non-physical value.
  void inject(const std::string& parameter, double value);

 private:
  enum class Phase { Idle, Approach, Evacuate, Transfer, Release };

  void apply(const std::string& parameter, double value);
  double p(const char* name) const { return params_.at(name); }
  double next_internal() const;
  void advance_gripper(std::vector<SignalFrame>& out);
  void start_next(double t);
  double pressure(double t) const;

  PlantScenario scenario_;
  ParameterSet params_;
  std::vector<double> arrivals_;
  std::vector<FaultInjection> faults_;  // sorted by time
  std::size_t next_arrival_ = 0;
  std::size_t next_fault_ = 0;
  std::size_t next_sample_ = 0;
  std::deque<double> conveyor_;  // exit times
  std::deque<double> queue_;     // items waiting at the gripper

  Phase phase_ = Phase::Idle;
  double phase_end_ = 0.0;
  double evac_start_ = 0.0;
  double evac_p_cap_ = 0.0;
  double evac_tau_ = 0.0;
  bool grip_ok_ = false;
  double now_ = 0.0;

  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
};

// Whole scenario as fast as possible.
std::vector<SignalFrame> run_plant_batch(const PlantScenario& scenario);

// Streams telemetry over an accepted connection and serves inject lines on it:
// {"op":"inject","param":<name>,"value":<num>} -> {"ok":true} | {"ok":false,"error":".."}.
// speed > 0 paces plant time at speed x wall time; speed <= 0 runs in batch.
// Returns when the scenario ends, the peer disconnects or stop() is true.
void serve_plant(Plant& plant, net::LineStream& stream, double speed,
                 const std::function<bool()>& stop = [] { return false; });

}  // namespace twinadapt
