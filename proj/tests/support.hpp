#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <string>
#include <sys/wait.h>

#include "twinadapt/estimation.hpp"
#include "twinadapt/gap.hpp"
#include "twinadapt/models.hpp"
#include "twinadapt/plant.hpp"
#include "twinadapt/pool.hpp"

namespace testing {

using namespace twinadapt;

inline std::string scenario_path(const std::string& name) { return std::string(TWINADAPT_SCENARIO_DIR) + "/" + name; }

inline std::shared_ptr<ModelPool> load_pool(const std::string& name = "pool.json") {
  return std::make_shared<ModelPool>(load_pool_manifest(scenario_path(name)));
}

inline ModelConfiguration line_config(const std::string& conveyor, const std::string& gripper, const std::string& id = "initial") {
  ModelConfiguration c;
  c.id = id;
  c.bindings["conveyor"] = ModelBinding{conveyor, {}};
  c.bindings["gripper"] = ModelBinding{gripper, {}};
  c.couplings.push_back({"conveyor", "item_out", "gripper", "item_in"});
  c.status = ConfigStatus::Active;
  return c;
}

inline RequirementSpec line_requirement() {
  RequirementSpec r;
  r.app_id = "pick-and-place";
  r.required_phenomena = {{"transport_delay", std::nullopt}, {"pick_timing", std::nullopt}};
  r.monitored_signals = {signals::kPickComplete, signals::kGripFailed, signals::kConveyorItemOut};
  r.window_length = 30.0;
  return r;
}

// Telemetry produced by a configuration itself: arrivals every `period` s from `offset`.
inline RecordedWindow synthetic_window(const ModelPool& pool, const ModelConfiguration& truth, Window w,
                                       const MonitorConfig& mon, double period = 10.0, double offset = 5.0) {
  RecordedWindow rec;
  rec.window = w;
  const Window run{w.t0 - mon.warmup, w.t1};
  std::vector<SignalFrame> stim;
  for (double t = offset; t < run.t1; t += period) {
    if (t >= run.t0) stim.push_back({t, signals::kItemArrival, 1.0, SignalKind::Event});
  }
  rec.stimulus = trace_from_frames(stim, run);
  CompositeModel composite = compose(truth, pool);
  SimTrace full = simulate(composite, rec.stimulus, run, mon.dt);
  rec.measured = full.cropped(w.t0, w.t1);
  rec.measured.wall_time_s.reset();
  // the plant reports arrivals too
  for (const auto& f : stim) {
    if (w.contains(f.t)) rec.measured.add(f);
  }
  return rec;
}

// Windows recorded by a gap monitor fed with a batch plant run.
inline std::vector<std::shared_ptr<const RecordedWindow>> plant_windows(const PlantScenario& scenario,
                                                                        std::shared_ptr<const ModelPool> pool,
                                                                        const ModelConfiguration& active,
                                                                        MonitorConfig mon = {}) {
  GapMonitor monitor(mon, std::move(pool), active);
  for (const auto& f : run_plant_batch(scenario)) monitor.ingest(f);
  monitor.close_through(scenario.duration);
  return monitor.recorded();
}

inline std::shared_ptr<const RecordedWindow> plant_window(const std::string& scenario_file, Window w,
                                                          std::shared_ptr<const ModelPool> pool,
                                                          const ModelConfiguration& active, MonitorConfig mon = {}) {
  for (auto& r : plant_windows(load_scenario(scenario_path(scenario_file)), std::move(pool), active, mon)) {
    if (r->window == w) return r;
  }
  return nullptr;
}

// Parameter recovery: telemetry generated at a known value, fitted from nominal, cross-checked
// against a dense grid over the bounds.
struct RecoveryCase {
  std::string name;  // <slot>.<tunable>
  std::string gripper;
  double truth = 0.0;
  std::size_t grid_points = 0;
};

struct RecoveryOutcome {
  FitResult fit;
  double truth = 0.0;
  double fitted = 0.0;
  double rel_error = 0.0;
  double grid_best_x = 0.0;
  double grid_best_d = 0.0;
  double grid_spacing = 0.0;
};

inline std::vector<RecoveryCase> recovery_cases() {
  return {{"conveyor.T_d", "gripper-d2", 2.3, 451},
          {"gripper.T_cycle", "gripper-d2", 3.6, 901},
          {"gripper.tau", "gripper-d3", 0.5, 391},
          {"gripper.p_cap", "gripper-d3", 75.0, 951}};
}

inline RecoveryOutcome run_recovery(const ModelPool& pool, const RecoveryCase& rc) {
  const auto dot = rc.name.find('.');
  const std::string slot = rc.name.substr(0, dot), param = rc.name.substr(dot + 1);
  MonitorConfig mon;
  const Window w{60, 90};
  auto truth = line_config("conveyor-d2", rc.gripper, "truth");
  truth.bindings[slot].params[param] = rc.truth;
  const RecordedWindow rec = synthetic_window(pool, truth, w, mon);

  const Tunable* tun = pool.get(truth.bindings.at(slot).model_id).find_tunable(param);
  FitRequest req;
  req.pool = &pool;
  req.config = line_config("conveyor-d2", rc.gripper, "start");
  req.tunables = {{slot, param, tun->lower, tun->upper}};
  req.recorded = rec;
  req.monitor = mon;

  RecoveryOutcome out;
  out.truth = rc.truth;
  out.fit = fit_parameters(req);
  out.fitted = out.fit.fitted.at(rc.name);
  out.rel_error = std::abs(out.fitted - rc.truth) / rc.truth;

  out.grid_spacing = tun->width() / static_cast<double>(rc.grid_points - 1);
  out.grid_best_d = 1e300;
  for (std::size_t i = 0; i < rc.grid_points; ++i) {
    const double x = tun->lower + static_cast<double>(i) * out.grid_spacing;
    auto c = req.config;
    c.bindings[slot].params[param] = x;
    const double d = evaluate_configuration(pool, c, rec, mon).report.aggregate;
    if (d < out.grid_best_d) {
      out.grid_best_d = d;
      out.grid_best_x = x;
    }
  }
  return out;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

// Runs the command line tool; stderr is folded into the output.
inline CommandResult run_cli(const std::string& args) {
  CommandResult r;
  const std::string cmd = std::string(TWINADAPT_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace testing
