#include "twinadapt/signal.hpp"

#include <algorithm>
#include <fstream>
#include <tuple>

#include "twinadapt/error.hpp"

namespace twinadapt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InvalidDescriptor: return "InvalidDescriptor";
    case ErrorKind::UnknownModelId: return "UnknownModelId";
    case ErrorKind::NoSuitableCandidate: return "NoSuitableCandidate";
    case ErrorKind::InvalidConfiguration: return "InvalidConfiguration";
    case ErrorKind::UnsupportedDepth: return "UnsupportedDepth";
    case ErrorKind::ParamOutOfBounds: return "ParamOutOfBounds";
    case ErrorKind::AlgebraicLoop: return "AlgebraicLoop";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::Unreachable: return "Unreachable";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::RemoteSimulationError: return "RemoteSimulationError";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::UnknownParameter: return "UnknownParameter";
    case ErrorKind::WindowMismatch: return "WindowMismatch";
    case ErrorKind::SimulationFailure: return "SimulationFailure";
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ActivationConflict: return "ActivationConflict";
  }
  return "Unknown";
}

std::string_view to_string(SignalKind kind) {
  return kind == SignalKind::Sample ? "sample" : "event";
}

SignalKind signal_kind_from_string(std::string_view text) {
  if (text == "sample") return SignalKind::Sample;
  if (text == "event") return SignalKind::Event;
  throw Error(ErrorKind::ProtocolError, "field 'kind' must be \"sample\" or \"event\"");
}

void SimTrace::add(const SignalFrame& frame) {
  auto [it, inserted] = series.try_emplace(frame.signal);
  if (inserted) it->second.kind = frame.kind;
  it->second.t.push_back(frame.t);
  it->second.v.push_back(frame.value);
}

void SimTrace::declare(const std::string& signal, SignalKind kind) {
  auto [it, inserted] = series.try_emplace(signal);
  if (inserted) it->second.kind = kind;
}

const Series* SimTrace::find(const std::string& signal) const {
  auto it = series.find(signal);
  return it == series.end() ? nullptr : &it->second;
}

std::size_t SimTrace::frame_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : series) n += s.size();
  return n;
}

SimTrace SimTrace::cropped(double from, double to) const {
  SimTrace out;
  out.window = {from, to};
  out.wall_time_s = wall_time_s;
  for (const auto& [name, s] : series) {
    Series& dst = out.series[name];
    dst.kind = s.kind;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.t[i] >= from && s.t[i] < to) {
        dst.t.push_back(s.t[i]);
        dst.v.push_back(s.v[i]);
      }
    }
  }
  return out;
}

void sort_frames(std::vector<SignalFrame>& frames) {
  std::stable_sort(frames.begin(), frames.end(), [](const SignalFrame& a, const SignalFrame& b) {
    // samples first at equal time
    return std::tuple(a.t, a.kind == SignalKind::Event) < std::tuple(b.t, b.kind == SignalKind::Event);
  });
}

std::vector<SignalFrame> SimTrace::frames() const {
  std::vector<SignalFrame> out;
  out.reserve(frame_count());
  for (const auto& [name, s] : series) {
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s.t[i], name, s.v[i], s.kind});
  }
  // series are iterated in name order, so the stable sort yields name order on ties
  sort_frames(out);
  return out;
}

bool SimTrace::same_data(const SimTrace& other) const {
  return window == other.window && series == other.series;
}

SimTrace trace_from_frames(const std::vector<SignalFrame>& frames, Window window) {
  SimTrace trace;
  trace.window = window;
  for (const auto& f : frames) trace.add(f);
  return trace;
}

nlohmann::json frame_to_json(const SignalFrame& frame) {
  nlohmann::json j;
  j["t"] = frame.t;
  j["signal"] = frame.signal;
  j["value"] = frame.value;
  j["kind"] = std::string(to_string(frame.kind));
  return j;
}

namespace {

double number_field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || !it->is_number()) {
    throw Error(ErrorKind::ProtocolError, std::string("field '") + name + "' missing or not a number");
  }
  return it->get<double>();
}

std::string string_field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorKind::ProtocolError, std::string("field '") + name + "' missing or not a string");
  }
  return it->get<std::string>();
}

}  // namespace

SignalFrame frame_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ProtocolError, "frame is not a JSON object");
  SignalFrame f;
  f.t = number_field(j, "t");
  f.signal = string_field(j, "signal");
  f.value = number_field(j, "value");
  f.kind = signal_kind_from_string(string_field(j, "kind"));
  if (f.t < 0.0) throw Error(ErrorKind::ProtocolError, "field 't' is negative");
  return f;
}

std::string frame_to_line(const SignalFrame& frame) { return frame_to_json(frame).dump(); }

nlohmann::json trace_to_json(const SimTrace& trace) {
  nlohmann::json j;
  j["window"] = {trace.window.t0, trace.window.t1};
  nlohmann::json declared = nlohmann::json::object();
  for (const auto& [name, s] : trace.series) declared[name] = std::string(to_string(s.kind));
  j["signals"] = std::move(declared);
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : trace.frames()) frames.push_back(frame_to_json(f));
  j["frames"] = std::move(frames);
  return j;
}

SimTrace trace_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ProtocolError, "trace is not a JSON object");
  auto w = j.find("window");
  if (w == j.end() || !w->is_array() || w->size() != 2 || !(*w)[0].is_number() || !(*w)[1].is_number()) {
    throw Error(ErrorKind::ProtocolError, "field 'window' must be [t0, t1]");
  }
  SimTrace trace;
  trace.window = {(*w)[0].get<double>(), (*w)[1].get<double>()};
  if (auto s = j.find("signals"); s != j.end()) {
    if (!s->is_object()) throw Error(ErrorKind::ProtocolError, "field 'signals' must be an object");
    for (const auto& [name, kind] : s->items()) {
      if (!kind.is_string()) throw Error(ErrorKind::ProtocolError, "field 'signals." + name + "' must be a string");
      trace.declare(name, signal_kind_from_string(kind.get<std::string>()));
    }
  }
  auto f = j.find("frames");
  if (f == j.end() || !f->is_array()) throw Error(ErrorKind::ProtocolError, "field 'frames' missing or not an array");
  for (const auto& frame : *f) trace.add(frame_from_json(frame));
  return trace;
}

std::vector<SignalFrame> read_telemetry_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open telemetry file " + path);
  std::vector<SignalFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // truncated trailing line
      throw Error(ErrorKind::ProtocolError, "malformed telemetry line in " + path);
    }
    frames.push_back(frame_from_json(j));
  }
  return frames;
}

void write_telemetry_file(const std::string& path, const std::vector<SignalFrame>& frames) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write telemetry file " + path);
  for (const auto& f : frames) out << frame_to_line(f) << '\n';
}

}  // namespace twinadapt
