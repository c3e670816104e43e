#include "twinadapt/gap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "twinadapt/error.hpp"

namespace twinadapt {

nlohmann::json report_to_json(const DeviationReport& r) {
  nlohmann::json j;
  j["window"] = {r.window.t0, r.window.t1};
  j["per_signal"] = r.per_signal;
  j["D"] = r.aggregate;
  j["epsilon"] = r.epsilon;
  j["breached"] = r.breached;
  j["suppressed"] = r.suppressed;
  j["config_id"] = r.config_id;
  if (r.degraded) j["degraded"] = *r.degraded;
  return j;
}

DeviationReport report_from_json(const nlohmann::json& j) {
  try {
    DeviationReport r;
    const auto& w = j.at("window");
    r.window = {w.at(0).get<double>(), w.at(1).get<double>()};
    r.per_signal = j.at("per_signal").get<std::map<std::string, double>>();
    r.aggregate = j.at("D").get<double>();
    r.epsilon = j.value("epsilon", 0.05);
    r.breached = j.value("breached", r.aggregate > r.epsilon);
    r.suppressed = j.value("suppressed", false);
    r.config_id = j.value("config_id", "");
    if (j.contains("degraded")) r.degraded = j["degraded"].get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidRequest, std::string("deviation report: ") + e.what());
  }
}

double event_deviation(const std::vector<double>& measured, const std::vector<double>& simulated,
                       double window_length, double match_horizon) {
  const std::size_t n = measured.size();
  const std::size_t m = simulated.size();
  if (n + m == 0) return 0.0;
  std::size_t i = 0, k = 0, matched = 0;
  double sum_dt = 0.0;
  while (i < n && k < m) {
    const double d = std::abs(measured[i] - simulated[k]);
    if (d <= match_horizon) {
      sum_dt += d;
      ++matched;
      ++i;
      ++k;
    } else if (measured[i] < simulated[k]) {
      ++i;
    } else {
      ++k;
    }
  }
  const double unmatched = static_cast<double>(n + m - 2 * matched);
  const double timing = matched ? (sum_dt / static_cast<double>(matched)) / window_length : 0.0;
  return timing + unmatched / static_cast<double>(n + m);
}

namespace {

double interpolate(const Series& s, double t) {
  auto it = std::lower_bound(s.t.begin(), s.t.end(), t);
  if (it == s.t.end()) return s.v.back();
  const auto idx = static_cast<std::size_t>(it - s.t.begin());
  if (*it == t || idx == 0) return s.v[idx];
  const double t0 = s.t[idx - 1], t1 = s.t[idx];
  const double a = (t - t0) / (t1 - t0);
  return s.v[idx - 1] + a * (s.v[idx] - s.v[idx - 1]);
}

}  // namespace

double sample_deviation(const Series& measured, const Series& simulated) {
  if (measured.empty() && simulated.empty()) return 0.0;
  if (measured.empty() || simulated.empty()) return 1.0;
  double sq = 0.0;
  double lo = measured.v.front(), hi = measured.v.front(), peak = 0.0;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    const double e = interpolate(simulated, measured.t[i]) - measured.v[i];
    sq += e * e;
    lo = std::min(lo, measured.v[i]);
    hi = std::max(hi, measured.v[i]);
    peak = std::max(peak, std::abs(measured.v[i]));
  }
  const double rmse = std::sqrt(sq / static_cast<double>(measured.size()));
  const double range = hi - lo;
  const double denom = range < 1e-9 ? std::max(peak, 1.0) : range;
  return rmse / denom;
}

DeviationReport compute_deviation(const SimTrace& measured, const SimTrace& simulated, const TagSet& signals,
                                  double epsilon, double match_horizon) {
  const double tol = 1e-9 * std::max(1.0, std::abs(measured.window.t1));
  if (std::abs(measured.window.t0 - simulated.window.t0) > tol || std::abs(measured.window.t1 - simulated.window.t1) > tol) {
    throw Error(ErrorKind::WindowMismatch, "measured and simulated traces cover different windows");
  }
  DeviationReport r;
  r.window = measured.window;
  r.epsilon = epsilon;
  static const Series kEmpty;
  for (const auto& name : signals) {
    const Series* ms = measured.find(name);
    const Series* ss = simulated.find(name);
    const SignalKind kind = ms ? ms->kind : ss ? ss->kind : SignalKind::Event;
    const Series& a = ms ? *ms : kEmpty;
    const Series& b = ss ? *ss : kEmpty;
    double d;
    if (kind == SignalKind::Sample) {
      // A sampled signal on one side only is a complete mismatch.
      d = (ms == nullptr) != (ss == nullptr) ? 1.0 : sample_deviation(a, b);
    } else {
      d = event_deviation(a.t, b.t, measured.window.length(), match_horizon);
    }
    r.per_signal[name] = d;
  }
  double sum = 0.0;
  for (const auto& [_, d] : r.per_signal) sum += d;
  r.aggregate = r.per_signal.empty() ? 0.0 : sum / static_cast<double>(r.per_signal.size());
  r.breached = r.aggregate > epsilon;
  return r;
}

nlohmann::json recorded_window_to_json(const RecordedWindow& w) {
  return {{"window", {w.window.t0, w.window.t1}}, {"measured", trace_to_json(w.measured)}, {"stimulus", trace_to_json(w.stimulus)}};
}

RecordedWindow recorded_window_from_json(const nlohmann::json& j) {
  RecordedWindow w;
  try {
    w.window = {j.at("window").at(0).get<double>(), j.at("window").at(1).get<double>()};
    w.measured = trace_from_json(j.at("measured"));
    w.stimulus = trace_from_json(j.at("stimulus"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidRequest, std::string("recorded window: ") + e.what());
  }
  return w;
}

TagSet evaluation_signals(const TagSet& monitored, const CompositeModel& composite, const SimTrace& measured) {
  TagSet out = monitored;
  for (const auto& [signal, _] : composite.declared_outputs()) {
    if (measured.find(signal)) out.insert(signal);
  }
  return out;
}

Evaluation evaluate_configuration(const ModelPool& pool, const ModelConfiguration& config, const RecordedWindow& rec,
                                  const MonitorConfig& cfg, const ModelRunner* runner) {
  CompositeModel composite = compose(config, pool);
  const Window run{rec.window.t0 - cfg.warmup, rec.window.t1};
  SimTrace full;
  if (runner && composite.has_remote()) {
    const auto start = std::chrono::steady_clock::now();
    full = composite.simulate_decentralized(rec.stimulus, run, cfg.dt, *runner);
    full.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } else {
    full = simulate(composite, rec.stimulus, run, cfg.dt);
  }
  Evaluation ev;
  ev.wall_time_s = full.wall_time_s.value_or(0.0);
  ev.simulated = full.cropped(rec.window.t0, rec.window.t1);
  ev.report = compute_deviation(rec.measured, ev.simulated, evaluation_signals(cfg.monitored_signals, composite, rec.measured),
                                cfg.epsilon, cfg.match_horizon);
  ev.report.config_id = config.id;
  return ev;
}

// ---- GapMonitor ---------------------------------------------------------

GapMonitor::GapMonitor(MonitorConfig config, std::shared_ptr<const ModelPool> pool, ModelConfiguration active)
    : config_(std::move(config)), pool_(std::move(pool)), active_(std::move(active)) {
  if (!(config_.epsilon > 0.0)) throw Error(ErrorKind::ConfigError, "monitor epsilon must be > 0");
  if (!(config_.window_length > 0.0)) throw Error(ErrorKind::ConfigError, "monitor window_length must be > 0");
  if (config_.warmup < 0.0) throw Error(ErrorKind::ConfigError, "monitor warmup must be >= 0");
}

void GapMonitor::ingest(const SignalFrame& frame) {
  std::lock_guard lock(mutex_);
  if (frame.t < current_t0_) {
    ++dropped_;
    return;
  }
  const double L = config_.window_length;
  if (frame.t >= current_t0_ + L) {
    if (!current_.empty()) close_current_locked();
    current_t0_ = std::floor(frame.t / L) * L;
  }
  current_.push_back(frame);
  if (frame.kind == SignalKind::Event) history_.push_back(frame);
}

void GapMonitor::close_through(double t) {
  std::lock_guard lock(mutex_);
  if (current_t0_ + config_.window_length <= t && !current_.empty()) {
    close_current_locked();
    current_t0_ += config_.window_length;
  }
}

void GapMonitor::close_current_locked() {
  const Window w{current_t0_, current_t0_ + config_.window_length};
  auto rec = std::make_shared<RecordedWindow>();
  rec->window = w;
  rec->measured = trace_from_frames(current_, w);
  std::vector<SignalFrame> stim;
  const double from = w.t0 - config_.warmup;
  for (const auto& f : history_) {
    if (f.t >= from && f.t < w.t1) stim.push_back(f);
  }
  rec->stimulus = trace_from_frames(stim, {from, w.t1});
  current_.clear();
  // keep only what the next window's warmup can reach
  const double keep_from = w.t1 - config_.warmup;
  while (!history_.empty() && history_.front().t < keep_from) history_.pop_front();
  closed_.push_back(rec);
  retained_.push_back(rec);
  while (retained_.size() > config_.retain_windows) retained_.pop_front();
}

std::vector<WindowOutcome> GapMonitor::evaluate_pending() {
  std::lock_guard eval_lock(eval_mutex_);
  std::vector<WindowOutcome> out;
  while (true) {
    std::shared_ptr<const RecordedWindow> rec;
    ModelConfiguration active;
    {
      std::lock_guard lock(mutex_);
      if (closed_.empty()) break;
      rec = closed_.front();
      closed_.pop_front();
      active = active_;
    }
    WindowOutcome outcome;
    outcome.recorded = rec;
    try {
      outcome.report = evaluate_configuration(*pool_, active, *rec, config_).report;
    } catch (const std::exception& e) {
      outcome.report.window = rec->window;
      outcome.report.epsilon = config_.epsilon;
      outcome.report.config_id = active.id;
      outcome.report.degraded = e.what();
    }
    {
      std::lock_guard lock(mutex_);
      const bool holding = hold_off_left_ > 0;
      if (holding) --hold_off_left_;
      if (!outcome.report.degraded) {
        last_d_ = outcome.report.aggregate;
        if (outcome.report.breached) {
          outcome.report.suppressed = holding;
          outcome.trigger = !holding;
        }
      }
    }
    out.push_back(std::move(outcome));
  }
  return out;
}

void GapMonitor::rebind(ModelConfiguration active) {
  std::lock_guard lock(mutex_);
  active_ = std::move(active);
  hold_off_left_ = config_.hold_off;
}

ModelConfiguration GapMonitor::active() const {
  std::lock_guard lock(mutex_);
  return active_;
}

std::size_t GapMonitor::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::size_t GapMonitor::pending() const {
  std::lock_guard lock(mutex_);
  return closed_.size();
}

std::optional<double> GapMonitor::last_deviation() const {
  std::lock_guard lock(mutex_);
  return last_d_;
}

std::shared_ptr<const RecordedWindow> GapMonitor::recorded(Window w) const {
  std::lock_guard lock(mutex_);
  for (const auto& r : retained_) {
    if (std::abs(r->window.t0 - w.t0) < 1e-9 && std::abs(r->window.t1 - w.t1) < 1e-9) return r;
  }
  return nullptr;
}

std::vector<std::shared_ptr<const RecordedWindow>> GapMonitor::recorded() const {
  std::lock_guard lock(mutex_);
  return {retained_.begin(), retained_.end()};
}

}  // namespace twinadapt
