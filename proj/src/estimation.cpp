#include "twinadapt/estimation.hpp"

#include <algorithm>
#include <sstream>

#include "twinadapt/error.hpp"

namespace twinadapt {

nlohmann::json fit_result_to_json(const FitResult& r) {
  nlohmann::json j;
  j["fitted"] = r.fitted;
  j["residual"] = r.residual;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["trajectory"] = nlohmann::json::array();
  for (const auto& s : r.trajectory) j["trajectory"].push_back({{"params", s.point}, {"D", s.residual}});
  return j;
}

std::vector<TunableRef> fittable_tunables(const ModelConfiguration& config, const ModelPool& pool) {
  std::vector<TunableRef> out;
  for (const auto& [slot, binding] : config.bindings) {
    const ModelDescriptor& d = pool.get(binding.model_id);
    for (const auto& t : d.tunables) {
      if (t.fit && t.upper > t.lower) out.push_back({slot, t.name, t.lower, t.upper});
    }
  }
  return out;
}

namespace {

void validate(const FitRequest& req) {
  if (!req.pool) throw Error(ErrorKind::InvalidRequest, "fit request without pool");
  if (req.tunables.empty()) throw Error(ErrorKind::InvalidRequest, "fit request without tunables");
  if (req.options.budget < 1) throw Error(ErrorKind::InvalidRequest, "fit budget must be >= 1");
  for (const auto& t : req.tunables) {
    auto b = req.config.bindings.find(t.slot);
    if (b == req.config.bindings.end()) throw Error(ErrorKind::InvalidRequest, "unknown slot '" + t.slot + "'");
    if (!req.pool->get(b->second.model_id).find_tunable(t.name)) {
      throw Error(ErrorKind::InvalidRequest, "'" + t.name + "' is not declared by " + b->second.model_id);
    }
    if (!(t.upper > t.lower)) throw Error(ErrorKind::InvalidRequest, "empty bounds for " + t.key());
  }
}

std::string describe(const ParameterSet& point) {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto& [k, v] : point) {
    os << (first ? "" : ", ") << k << "=" << v;
    first = false;
  }
  os << "}";
  return os.str();
}

}  // namespace

FitResult fit_parameters(const FitRequest& req) {
  validate(req);
  const auto& tun = req.tunables;
  const std::size_t n = tun.size();

  std::vector<double> x(n), step(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = req.config.bindings.at(tun[i].slot);
    double v;
    if (auto it = b.params.find(tun[i].name); it != b.params.end()) {
      v = it->second;
    } else {
      v = req.pool->get(b.model_id).find_tunable(tun[i].name)->nominal;
    }
    x[i] = std::clamp(v, tun[i].lower, tun[i].upper);
    step[i] = req.options.initial_step * tun[i].width();
  }

  FitResult result;
  auto configure = [&](const std::vector<double>& p) {
    ModelConfiguration c = req.config;
    for (std::size_t i = 0; i < n; ++i) c.bindings.at(tun[i].slot).params[tun[i].name] = p[i];
    return c;
  };
  auto as_point = [&](const std::vector<double>& p) {
    ParameterSet s;
    for (std::size_t i = 0; i < n; ++i) s[tun[i].key()] = p[i];
    return s;
  };
  auto objective = [&](const std::vector<double>& p) {
    ++result.iterations;
    try {
      Evaluation ev = evaluate_configuration(*req.pool, configure(p), req.recorded, req.monitor);
      result.sim_wall_s += ev.wall_time_s;
      return ev.report.aggregate;
    } catch (const Error& e) {
      throw Error(ErrorKind::SimulationFailure, "at " + describe(as_point(p)) + ": " + e.what());
    }
  };

  double f = objective(x);
  result.trajectory.push_back({as_point(x), f});
  const double tol = req.options.tol;
  double last_sweep_gain = 0.0;
  bool full_sweep_done = false;

  auto exhausted = [&] { return result.iterations >= req.options.budget; };
  auto steps_small = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      if (step[i] >= req.options.min_step * tun[i].width()) return false;
    }
    return true;
  };

  while (f > tol && !exhausted() && !steps_small()) {
    const double sweep_start = f;
    bool improved = false;
    bool interrupted = false;
    for (std::size_t i = 0; i < n && f > tol; ++i) {
      for (double dir : {1.0, -1.0}) {
        if (exhausted()) {
          interrupted = true;
          break;
        }
        std::vector<double> trial = x;
        trial[i] = std::clamp(x[i] + dir * step[i], tun[i].lower, tun[i].upper);
        if (trial[i] == x[i]) continue;
        const double ft = objective(trial);
        if (ft < f) {
          x = std::move(trial);
          f = ft;
          improved = true;
          result.trajectory.push_back({as_point(x), f});
          break;
        }
      }
      if (interrupted) break;
    }
    if (interrupted) break;
    full_sweep_done = true;
    last_sweep_gain = sweep_start - f;
    if (!improved) {
      for (auto& s : step) s *= 0.5;
    }
  }

  result.config = configure(x);
  result.fitted = as_point(x);
  result.residual = f;
  result.converged = f <= tol || (full_sweep_done && last_sweep_gain < tol);
  return result;
}

}  // namespace twinadapt
