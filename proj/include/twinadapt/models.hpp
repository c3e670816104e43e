#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "twinadapt/pool.hpp"
#include "twinadapt/signal.hpp"

namespace twinadapt {

// Event times per in-port for one macro step.
using PortEvents = std::map<std::string, std::vector<double>>;

struct PortFrame {
  std::string port;
  double t = 0.0;
  double value = 0.0;
  SignalKind kind = SignalKind::Event;
};

// Behavioral contract shared by every executable model. step() is deterministic
// given state, inputs and dt; instances are single-threaded.
class ModelInstance {
 public:
  ModelInstance(const ModelDescriptor& descriptor, ParameterSet params)
      : descriptor_(descriptor), params_(std::move(params)) {}
  virtual ~ModelInstance() = default;

  const ModelDescriptor& descriptor() const { return descriptor_; }
  const ParameterSet& parameters() const { return params_; }

  // Back to the initial state; parameters are kept.
  virtual void reset() = 0;

  // Advances over [t, t + dt). Input events carry absolute times inside the step.
  // Samples are reported at t; events at their exact time inside the step.
  virtual void step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) = 0;

 protected:
  double param(const std::string& name) const { return params_.at(name); }

 private:
  ModelDescriptor descriptor_;
  ParameterSet params_;
};

// Depth 1: Idle -> Approach -> Grip -> Transfer -> Release with fixed phase durations.
class GripperD1 final : public ModelInstance {
 public:
  GripperD1(const ModelDescriptor& d, ParameterSet p);
  void reset() override;
  void step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) override;

  enum class Phase { Idle, Approach, Grip, Transfer, Release };
  Phase phase() const { return phase_; }

 private:
  void start_next(double t);

  Phase phase_ = Phase::Idle;
  double phase_end_ = 0.0;
  std::deque<double> queue_;
};

// Depth 2: pick request in, pick_complete (or grip_failed) out after T_cycle.
class GripperD2 final : public ModelInstance {
 public:
  GripperD2(const ModelDescriptor& d, ParameterSet p);
  void reset() override;
  void step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) override;

 private:
  std::deque<double> pending_;
};

// Depth 3: vacuum evacuation p(s) = p_cap * (1 - exp(-s / tau)) and holding force p * A * n.
class GripperD3 final : public ModelInstance {
 public:
  GripperD3(const ModelDescriptor& d, ParameterSet p);
  void reset() override;
  void step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) override;

  double pressure_at(double t) const;

 private:
  enum class Phase { Idle, Approach, Evacuate, Transfer, Release };
  void start_next(double t);
  void advance_to(double t, std::vector<PortFrame>& out);

  Phase phase_ = Phase::Idle;
  double phase_end_ = 0.0;
  double evac_start_ = 0.0;
  bool grip_ok_ = false;
  std::deque<double> queue_;
};

// Depth 2 conveyor: item_in -> item_out after T_d.
class ConveyorD2 final : public ModelInstance {
 public:
  ConveyorD2(const ModelDescriptor& d, ParameterSet p);
  void reset() override;
  void step(double t, double dt, const PortEvents& in, std::vector<PortFrame>& out) override;

 private:
  std::deque<double> pending_;
};

// Closed-form evacuation law and its inverse, shared by models and tests.
namespace vacuum {
inline constexpr double kGravity = 9.81;
double pressure(double p_cap, double tau, double s);
// Time to reach p_target, or +inf if unreachable.
double time_to_reach(double p_cap, double tau, double p_target);
// Holding force in N for pressure in kPa, per-cup area in m^2, n cups.
double holding_force(double p_kpa, double cup_area, double n_cups);
double required_force(double mass, double safety);
}  // namespace vacuum

// Missing parameters default to nominal. Throws UnsupportedDepth or ParamOutOfBounds.
std::unique_ptr<ModelInstance> instantiate(const ModelDescriptor& descriptor, const ParameterSet& params);

// Runs a single model over a window; used for decentralized (per-model) execution.
using ModelRunner = std::function<SimTrace(const ModelDescriptor&, const ParameterSet&, const SimTrace& stimulus,
                                           Window window, double dt)>;

class CompositeModel {
 public:
  struct Node {
    std::string slot;
    std::unique_ptr<ModelInstance> instance;
  };

  const std::vector<Node>& nodes() const { return nodes_; }
  const ModelConfiguration& configuration() const { return config_; }
  // Any bound model with a remote endpoint.
  bool has_remote() const;
  void reset();

  // Output signal tags and kinds declared by the composite.
  std::map<std::string, SignalKind> declared_outputs() const;
  // Signals consumed from the stimulus (uncoupled in-ports).
  TagSet stimulus_signals() const;

  SimTrace simulate(const SimTrace& stimulus, Window window, double dt);
  // Model-by-model execution in topological order; remote models go through the runner.
  SimTrace simulate_decentralized(const SimTrace& stimulus, Window window, double dt, const ModelRunner& runner);

 private:
  friend CompositeModel compose(const ModelConfiguration&, const ModelPool&);
  SimTrace simulate_steps(const SimTrace& stimulus, Window window, double dt);

  ModelConfiguration config_;
  std::vector<Node> nodes_;  // topological order
};

// Throws UnknownModelId, instantiate errors, or AlgebraicLoop.
CompositeModel compose(const ModelConfiguration& config, const ModelPool& pool);

// Simulates and measures wall-clock time. Throws NumericalFailure on non-finite output.
SimTrace simulate(CompositeModel& composite, const SimTrace& stimulus, Window window, double dt);

// Single-model window run on a fresh instance (the local ModelRunner).
SimTrace simulate_single(const ModelDescriptor& descriptor, const ParameterSet& params, const SimTrace& stimulus,
                         Window window, double dt);

inline constexpr double kDefaultMacroStep = 0.05;

}  // namespace twinadapt
