#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace twinadapt {

enum class SignalKind { Sample, Event };

std::string_view to_string(SignalKind kind);
SignalKind signal_kind_from_string(std::string_view text);

// Well-known telemetry tags.
namespace signals {
inline constexpr const char* kItemArrival = "item_arrival";
inline constexpr const char* kConveyorItemOut = "conveyor_item_out";
inline constexpr const char* kItemAtGripper = "item_at_gripper";
inline constexpr const char* kPickComplete = "pick_complete";
inline constexpr const char* kGripFailed = "grip_failed";
inline constexpr const char* kSuctionPressure = "suction_pressure";
}  // namespace signals

struct SignalFrame {
  double t = 0.0;
  std::string signal;
  double value = 0.0;
  SignalKind kind = SignalKind::Sample;

  bool operator==(const SignalFrame&) const = default;
};

// Half-open time interval [t0, t1).
struct Window {
  double t0 = 0.0;
  double t1 = 0.0;

  double length() const { return t1 - t0; }
  bool contains(double t) const { return t >= t0 && t < t1; }
  bool operator==(const Window&) const = default;
};

struct Series {
  SignalKind kind = SignalKind::Sample;
  std::vector<double> t;
  std::vector<double> v;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
  bool operator==(const Series&) const = default;
};

// Output of one simulation run, or a measured window of telemetry.
struct SimTrace {
  Window window;
  std::map<std::string, Series> series;
  // Wall-clock duration of the run that produced the trace; reporting only.
  std::optional<double> wall_time_s;

  // Appends a frame, creating the series on first use.
  void add(const SignalFrame& frame);
  // Declares a signal so that it is present even without frames.
  void declare(const std::string& signal, SignalKind kind);

  const Series* find(const std::string& signal) const;
  std::size_t frame_count() const;

  // Frames in [from, to), window set accordingly.
  SimTrace cropped(double from, double to) const;
  // All frames in time order; at equal time samples precede events, then by signal name.
  std::vector<SignalFrame> frames() const;

  // Series equality; wall-clock metadata is ignored.
  bool same_data(const SimTrace& other) const;
};

SimTrace trace_from_frames(const std::vector<SignalFrame>& frames, Window window);
void sort_frames(std::vector<SignalFrame>& frames);

// Telemetry wire format: {"t":..,"signal":..,"value":..,"kind":"sample"|"event"}
nlohmann::json frame_to_json(const SignalFrame& frame);
// Throws Error(ProtocolError) naming the offending field.
SignalFrame frame_from_json(const nlohmann::json& j);
std::string frame_to_line(const SignalFrame& frame);

// {"window":[t0,t1],"signals":{name:kind},"frames":[frame...]}
nlohmann::json trace_to_json(const SimTrace& trace);
SimTrace trace_from_json(const nlohmann::json& j);

// NDJSON telemetry file helpers.
std::vector<SignalFrame> read_telemetry_file(const std::string& path);
void write_telemetry_file(const std::string& path, const std::vector<SignalFrame>& frames);

}  // namespace twinadapt
