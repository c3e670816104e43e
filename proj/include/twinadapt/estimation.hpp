#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/gap.hpp"
#include "twinadapt/pool.hpp"

namespace twinadapt {

// One fitted parameter: <slot>.<name> within bounds.
struct TunableRef {
  std::string slot;
  std::string name;
  double lower = 0.0;
  double upper = 0.0;

  std::string key() const { return slot + "." + name; }
  double width() const { return upper - lower; }
};

struct FitOptions {
  std::size_t budget = 200;
  double tol = 1e-4;
  double initial_step = 0.25;  // fraction of the bound width
  double min_step = 1e-3;      // fraction of the bound width
};

struct FitRequest {
  const ModelPool* pool = nullptr;
  ModelConfiguration config;  // starting point
  std::vector<TunableRef> tunables;
  RecordedWindow recorded;
  MonitorConfig monitor;  // signals, warmup, dt, match horizon
  FitOptions options;
};

struct FitStep {
  ParameterSet point;  // keyed by TunableRef::key()
  double residual = 0.0;
};

struct FitResult {
  ModelConfiguration config;  // fitted configuration
  ParameterSet fitted;        // keyed by TunableRef::key()
  double residual = 0.0;
  std::size_t iterations = 0;  // objective evaluations
  bool converged = false;
  std::vector<FitStep> trajectory;  // start point and each accepted move
  double sim_wall_s = 0.0;          // wall-clock metadata
};

nlohmann::json fit_result_to_json(const FitResult& r);

// Fittable tunables of every bound model (descriptor fit flag set), slot order.
std::vector<TunableRef> fittable_tunables(const ModelConfiguration& config, const ModelPool& pool);

// Coordinate pattern search on the aggregate deviation. Throws InvalidRequest when the request
// is malformed and SimulationFailure (naming the point) when a simulation fails.
FitResult fit_parameters(const FitRequest& req);

}  // namespace twinadapt
