#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/models.hpp"
#include "twinadapt/pool.hpp"
#include "twinadapt/signal.hpp"

namespace twinadapt {

struct DeviationReport {
  Window window;
  std::map<std::string, double> per_signal;
  double aggregate = 0.0;  // D
  double epsilon = 0.05;
  bool breached = false;
  bool suppressed = false;  // breach during hold-off
  std::string config_id;
  std::optional<std::string> degraded;  // shadow simulation failure

  bool operator==(const DeviationReport&) const = default;
};

nlohmann::json report_to_json(const DeviationReport& r);
DeviationReport report_from_json(const nlohmann::json& j);

// Matched pairs beyond this distance count as two unmatched events.
inline constexpr double kDefaultMatchHorizon = 5.0;

// Greedy in-order matching; both lists sorted ascending.
double event_deviation(const std::vector<double>& measured, const std::vector<double>& simulated,
                       double window_length, double match_horizon = kDefaultMatchHorizon);
// NRMSE with the simulated series linearly interpolated at measured timestamps.
double sample_deviation(const Series& measured, const Series& simulated);

// Throws WindowMismatch when the traces cover different windows.
DeviationReport compute_deviation(const SimTrace& measured, const SimTrace& simulated, const TagSet& signals,
                                  double epsilon = 0.05, double match_horizon = kDefaultMatchHorizon);

struct MonitorConfig {
  double epsilon = 0.05;
  double window_length = 30.0;
  TagSet monitored_signals = {signals::kPickComplete, signals::kGripFailed, signals::kConveyorItemOut};
  int hold_off = 1;
  // Shadow runs start this long before the window so in-flight items are represented.
  double warmup = 10.0;
  double match_horizon = kDefaultMatchHorizon;
  double dt = kDefaultMacroStep;
  std::size_t retain_windows = 64;
};

// Telemetry of one closed window plus the stimulus needed to re-simulate it.
struct RecordedWindow {
  Window window;
  SimTrace measured;  // [t0, t1)
  SimTrace stimulus;  // event frames in [t0 - warmup, t1)
};

nlohmann::json recorded_window_to_json(const RecordedWindow& w);
RecordedWindow recorded_window_from_json(const nlohmann::json& j);

// Monitored signals plus every output of the composite that the measurement carries.
TagSet evaluation_signals(const TagSet& monitored, const CompositeModel& composite, const SimTrace& measured);

struct Evaluation {
  DeviationReport report;
  SimTrace simulated;  // cropped to the window
  double wall_time_s = 0.0;
};

// Shadow-simulates a configuration over a recorded window and compares it with the measurement.
// Configurations with remote models run model by model through the runner when one is given.
Evaluation evaluate_configuration(const ModelPool& pool, const ModelConfiguration& config, const RecordedWindow& rec,
                                  const MonitorConfig& cfg, const ModelRunner* runner = nullptr);

struct WindowOutcome {
  DeviationReport report;
  std::shared_ptr<const RecordedWindow> recorded;
  bool trigger = false;
};

// Windowed shadow comparison of the active configuration against live telemetry.
// Windows are aligned at multiples of window_length and close when a frame at or past
// their end arrives (or on close_through). Thread-safe.
class GapMonitor {
 public:
  GapMonitor(MonitorConfig config, std::shared_ptr<const ModelPool> pool, ModelConfiguration active);

  const MonitorConfig& config() const { return config_; }

  void ingest(const SignalFrame& frame);
  // Closes every window ending at or before t.
  void close_through(double t);
  // Shadow-simulates closed windows in order.
  std::vector<WindowOutcome> evaluate_pending();

  // New active configuration; the next hold_off windows cannot trigger.
  void rebind(ModelConfiguration active);
  ModelConfiguration active() const;

  std::size_t dropped() const;
  std::size_t pending() const;
  std::optional<double> last_deviation() const;
  std::shared_ptr<const RecordedWindow> recorded(Window w) const;
  std::vector<std::shared_ptr<const RecordedWindow>> recorded() const;

 private:
  void close_current_locked();

  MonitorConfig config_;
  std::shared_ptr<const ModelPool> pool_;
  mutable std::mutex mutex_;
  ModelConfiguration active_;
  int hold_off_left_ = 0;
  std::size_t dropped_ = 0;
  std::optional<double> last_d_;

  double current_t0_ = 0.0;
  std::vector<SignalFrame> current_;
  // event frames kept for warmup stimulus
  std::deque<SignalFrame> history_;
  std::deque<std::shared_ptr<const RecordedWindow>> closed_;
  std::deque<std::shared_ptr<const RecordedWindow>> retained_;
  std::mutex eval_mutex_;  // one shadow simulation at a time
};

}  // namespace twinadapt
