// Acceptance run: one PASS/FAIL line per primary criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "twinadapt/remote.hpp"
#include "twinadapt/scenario.hpp"
#include "twinadapt/scoring.hpp"

using namespace twinadapt;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Verdict&)>& body) {
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS " : "FAIL ") << name << ":" << v.detail.str() << std::endl;
}

fs::path tmp(const std::string& name) {
  return fs::temp_directory_path() / ("twinadapt_acc_" + std::to_string(::getpid()) + "_" + name);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(std::ifstream(p)); }

std::string cli_scenario(const std::string& config, const std::string& scenario, const fs::path& report) {
  return "scenario run --config " + scenario_path(config) + " --scenario " + scenario_path(scenario) + " --report '" +
         report.string() + "'";
}

CandidateEvaluation cand(const std::string& id, double D, double T, double C, int depth) {
  CandidateEvaluation e;
  e.config_id = id;
  e.D = D;
  e.T = T;
  e.C = C;
  e.total_depth = depth;
  return e;
}

}  // namespace

int main() {
  std::cout.precision(6);

  criterion("end-to-end pressure drop", [](Verdict& v) {
    const auto report = tmp("e2e.json");
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_cli(cli_scenario("pressure.toml", "pressure_drop.toml", report));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.require(r.exit_code == 0, "exit code 0");
    auto j = read_json(report);

    const auto frames = run_plant_batch(load_scenario(scenario_path("pressure_drop.toml")));
    double first_fail = -1;
    for (const auto& f : frames) {
      if (f.signal == signals::kGripFailed) {
        first_fail = f.t;
        break;
      }
    }
    const auto& rec = j["records"][0];
    const double trig_t0 = rec["trigger"]["report"]["window"][0], trig_t1 = rec["trigger"]["report"]["window"][1];
    const double p_cap = rec["diagnosis"][0]["fitted"];
    const double post = j["post_adaptation"]["max_D"];
    v.detail << " first failed grip t=" << first_fail << ", trigger at window close t=" << trig_t1
             << ", selected " << j["selected"].get<std::string>() << ", post-adaptation D=" << post
             << ", fitted p_cap=" << p_cap << " kPa, wall " << wall << " s";
    v.require(first_fail >= trig_t0 && first_fail < trig_t1 && trig_t1 - first_fail <= 30.0, "trigger within one window");
    v.require(j["selected"] == "conveyor-d2+gripper-d3", "gripper-d3 selected");
    v.require(post <= 0.05, "post D <= 0.05");
    v.require(rec["diagnosis"][0]["parameter"] == "gripper.p_cap" && std::abs(p_cap - 18.0) <= 1.8, "p_cap within 10% of 18");
    v.require(wall < 60.0, "wall < 60 s");
  });

  criterion("stage ordering (drift closes in stage 1)", [](Verdict& v) {
    auto cfg = load_service_config(scenario_path("drift.toml"));
    auto run = run_scenario(cfg, load_scenario(scenario_path("conveyor_drift.toml")));
    v.require(run.exit_code == 0, "activated");
    v.require(!run.records.empty(), "a cycle ran");
    const auto& rec = run.records.at(0);
    const bool has_fit = rec.stage1 && rec.stage1->fit;
    v.require(has_fit, "record holds a FitResult");
    v.require(rec.stage2_batch_count() == 0, "zero stage-2 batches");
    const double T_d = has_fit ? rec.stage1->fit->fitted.at("conveyor.T_d") : -1;
    v.require(std::abs(T_d - 2.0) <= 0.1, "T_d = 2.0 +- 0.1");

    auto pool = std::make_shared<ModelPool>(load_pool_manifest(cfg.pool_manifest));
    const auto& window = *rec.trigger.recorded;
    double best_x = 0, best_d = 1e300;
    for (int i = 0; i <= 450; ++i) {
      auto c = cfg.active;
      c.bindings["conveyor"].params["T_d"] = 0.5 + 0.01 * i;
      const double d = evaluate_configuration(*pool, c, window, cfg.monitor).report.aggregate;
      if (d < best_d) {
        best_d = d;
        best_x = 0.5 + 0.01 * i;
      }
    }
    v.require(std::abs(best_x - T_d) <= 0.1, "dense-grid argmin agrees");
    v.detail << " stage1 fitted T_d=" << T_d << " (grid argmin " << best_x << "), stage-2 batches "
             << rec.stage2_batch_count() << ", fit iterations " << (has_fit ? rec.stage1->fit->iterations : 0);
  });

  criterion("parameter recovery (T_d, T_cycle, tau, p_cap)", [](Verdict& v) {
    auto pool = load_pool();
    for (const auto& rc : recovery_cases()) {
      auto out = run_recovery(*pool, rc);
      v.detail << " " << rc.name << " true " << rc.truth << " fit " << out.fitted << " (rel " << out.rel_error << ", D "
               << out.fit.residual << ", grid " << out.grid_best_x << ");";
      v.require(out.rel_error <= 0.05, rc.name + " within 5%");
      v.require(out.fit.residual <= 1e-3, rc.name + " residual <= 1e-3");
      v.require(out.fit.residual <= out.grid_best_d + 1e-3, rc.name + " no worse than grid minimum");
      v.require(std::abs(out.fitted - out.grid_best_x) <= 0.05 * rc.truth, rc.name + " near grid argmin");
    }
  });

  criterion("scorer properties", [](Verdict& v) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_set = [&] {
      std::vector<CandidateEvaluation> out;
      for (int i = 0; i < 5; ++i) out.push_back(cand("c" + std::to_string(i), 0.04 * u(rng), 10 + 90 * u(rng), 1 + 9 * u(rng), 2 + i % 3));
      return out;
    };
    auto sel = [](const Ranking& r) { return r.ranked.at(*r.selected); };
    // (a)
    bool affine = true;
    for (int trial = 0; trial < 300; ++trial) {
      auto base = random_set();
      const double a = 0.1 + 50 * u(rng), b = 40 * u(rng) - 20;
      const int m = trial % 3;
      auto moved = base;
      for (auto& e : moved) (m == 0 ? e.D : m == 1 ? e.T : e.C) = a * (m == 0 ? e.D : m == 1 ? e.T : e.C) + b;
      const Weights w = normalize_weights(0.3, 0.3, 0.4);
      auto r0 = rank_candidates(base, w, 0.05);
      auto r1 = rank_candidates(moved, w, m == 0 ? a * 0.05 + b : 0.05);
      affine &= sel(r0).config_id == sel(r1).config_id;
      for (std::size_t i = 0; i < r0.ranked.size(); ++i) {
        affine &= r0.ranked[i].config_id == r1.ranked[i].config_id;
        affine &= std::abs(r0.ranked[i].D_hat - r1.ranked[i].D_hat) <= 1e-9 &&
                  std::abs(r0.ranked[i].T_hat - r1.ranked[i].T_hat) <= 1e-9 &&
                  std::abs(r0.ranked[i].C_hat - r1.ranked[i].C_hat) <= 1e-9;
      }
    }
    v.require(affine, "(a) affine invariance");
    // (b), (c)
    bool quality = true, cost = true;
    for (int trial = 0; trial < 100; ++trial) {
      auto set = random_set();
      set[trial % 5].D = 0.5;
      set[trial % 5].C = 0.0;
      double min_d = 1e9, min_c = 1e9;
      for (const auto& e : set) {
        if (e.D <= 0.05) {
          min_d = std::min(min_d, e.D);
          min_c = std::min(min_c, e.C);
        }
      }
      quality &= sel(rank_candidates(set, normalize_weights(0, 0, 1), 0.05)).D == min_d;
      cost &= sel(rank_candidates(set, normalize_weights(0, 1, 0), 0.05)).C == min_c;
    }
    v.require(quality, "(b) w=(0,0,1) selects min D");
    v.require(cost, "(c) w=(0,1,0) selects min C among adequate");
    // (d)
    auto eq = rank_candidates({cand("b", 0.01, 10, 2, 6), cand("a", 0.01, 10, 2, 5)}, Weights{}, 0.05);
    bool zeros = true;
    for (const auto& e : eq.ranked) zeros &= e.D_hat == 0 && e.T_hat == 0 && e.C_hat == 0;
    v.require(zeros && sel(eq).total_depth == 5, "(d) equal metrics, depth tie-break");
    // (e)
    v.require(min_max_normalize({2, 4, 6}) == std::vector<double>{0.0, 0.5, 1.0}, "(e) [2,4,6] -> [0,0.5,1]");
    v.detail << " (a) 300 random affine trials, (b)/(c) 100 trials each, (d) depth tie-break, (e) exact";
  });

  criterion("gap metric", [](Verdict& v) {
    auto pool = load_pool();
    MonitorConfig mon;
    auto rec = synthetic_window(*pool, line_config("conveyor-d2", "gripper-d3"), {60, 90}, mon);
    const double same = compute_deviation(rec.measured, rec.measured,
                                          {signals::kPickComplete, signals::kGripFailed, signals::kSuctionPressure})
                            .aggregate;
    v.require(same == 0.0, "identical traces D = 0");
    const double nrmse = sample_deviation({SignalKind::Sample, {0, 1, 2, 3}, {0, 1, 0, 1}},
                                          {SignalKind::Sample, {0, 1, 2, 3}, {0.5, 1.5, 0.5, 1.5}});
    const double ev = event_deviation({10.0}, {10.6}, 30.0);
    v.require(std::abs(nrmse - 0.5) <= 1e-12, "NRMSE fixture 0.5");
    v.require(std::abs(ev - 0.02) <= 1e-12, "event fixture 0.02");
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
      Series m{SignalKind::Sample, {}, {}}, s{SignalKind::Sample, {}, {}};
      for (int i = 0; i < 40; ++i) {
        m.t.push_back(0.25 * i);
        m.v.push_back(10 * u(rng) - 5);
        s.t.push_back(0.3 * i + 0.1 * u(rng));
        s.v.push_back(10 * u(rng) - 5);
      }
      std::sort(s.t.begin(), s.t.end());
      const double d0 = sample_deviation(m, s);
      const double a = 0.01 + 100 * u(rng), b = 200 * u(rng) - 100, shift = std::ldexp(1.0, static_cast<int>(8 * u(rng)));
      auto ma = m, sa = s;
      for (auto& x : ma.v) x = a * x + b;
      for (auto& x : sa.v) x = a * x + b;
      for (auto& t : ma.t) t += shift;
      for (auto& t : sa.t) t += shift;
      worst = std::max(worst, std::abs(sample_deviation(ma, sa) - d0) / std::max(d0, 1e-300));
      std::vector<double> em, es;
      for (int k = 0; k < 8; ++k) {
        em.push_back(30 * u(rng));
        es.push_back(30 * u(rng));
      }
      std::sort(em.begin(), em.end());
      std::sort(es.begin(), es.end());
      const double e0 = event_deviation(em, es, 30);
      for (auto& t : em) t += shift * 7;
      for (auto& t : es) t += shift * 7;
      worst = std::max(worst, std::abs(event_deviation(em, es, 30) - e0) / std::max(e0, 1e-300));
    }
    v.require(worst <= 1e-9, "affine and time-shift invariance");
    v.detail << " identical D=" << same << ", NRMSE fixture err " << std::abs(nrmse - 0.5) << ", event fixture err "
             << std::abs(ev - 0.02) << ", worst relative change over 500 random pairs " << worst;
  });

  criterion("termination with NoAdequateConfiguration", [](Verdict& v) {
    const auto report = tmp("depth2.json");
    auto r = run_cli(cli_scenario("depth2.toml", "pressure_drop.toml", report));
    auto j = read_json(report);
    const auto& rec = j["records"][0];
    v.require(r.exit_code == 4, "exit code 4");
    v.require(rec["failure_reason"] == "NoAdequateConfiguration", "failure reason");
    v.require(rec["loop_count"].get<int>() <= 3, "at most 3 rounds");
    v.detail << " exit " << r.exit_code << ", reason " << rec["failure_reason"].dump() << ", rounds " << rec["loop_count"];
  });

  criterion("determinism", [](Verdict& v) {
    const auto a = tmp("det_a.json"), b = tmp("det_b.json");
    run_cli(cli_scenario("pressure.toml", "pressure_drop.toml", a));
    run_cli(cli_scenario("pressure.toml", "pressure_drop.toml", b));
    const std::string ja = strip_wall_clock(read_json(a)).dump(), jb = strip_wall_clock(read_json(b)).dump();
    v.require(ja == jb, "reports byte-identical outside wall_clock");

    auto pool = load_pool();
    RemoteModelServer server(pool, {"127.0.0.1", 0});
    ModelPool remote_pool;
    for (auto d : pool->all()) {
      if (d.slot == "gripper") d.endpoint = server.endpoint();
      remote_pool.register_model(d);
    }
    bool identical = true;
    for (const char* gripper : {"gripper-d1", "gripper-d2", "gripper-d3"}) {
      auto cfg = line_config("conveyor-d2", gripper);
      MonitorConfig mon;
      auto rec = synthetic_window(*pool, cfg, {60, 90}, mon);
      auto local = compose(cfg, *pool);
      auto remote = compose(cfg, remote_pool);
      auto lt = simulate(local, rec.stimulus, {50, 90}, mon.dt);
      auto rt = remote.simulate_decentralized(rec.stimulus, {50, 90}, mon.dt, default_model_runner());
      identical &= lt.series.size() == rt.series.size();
      for (const auto& [name, s] : lt.series) {
        const Series* o = rt.find(name);
        identical &= o && o->t.size() == s.t.size() &&
                     std::memcmp(o->t.data(), s.t.data(), s.t.size() * sizeof(double)) == 0 &&
                     std::memcmp(o->v.data(), s.v.data(), s.v.size() * sizeof(double)) == 0;
      }
    }
    v.require(identical, "remote and local traces bit-identical");
    v.detail << " report bytes " << ja.size() << " (identical: " << (ja == jb ? "yes" : "no")
             << "), remote vs local bit-identical for d1/d2/d3: " << (identical ? "yes" : "no");
  });

  criterion("bench ordering (best <= worst, worst dominated by the deepest model)", [](Verdict& v) {
    auto cases = load_bench(scenario_path("bench.toml"));
    std::vector<BenchRow> rows;
    for (const char* name : {"best", "worst"}) {
      for (const auto& c : cases) {
        if (c.name == name) rows.push_back(run_bench_case(c, 3));
      }
    }
    v.require(rows.size() == 2, "both cases defined");
    std::cout << bench_table(rows);
    const auto& best = rows.at(0);
    const auto& worst = rows.at(1);
    v.require(best.outcome == "activated" && worst.outcome == "activated", "both adapt");
    v.require(best.cycle_s <= worst.cycle_s, "best <= worst");
    v.require(best.stage2_batches == 0 && worst.stage2_batches >= 1, "best is stage 1 only, worst needs stage 2");
    v.require(worst.complex_share >= 0.5, "worst-case time dominated by max-depth simulations");
    v.detail << " best " << best.cycle_s << " s, worst " << worst.cycle_s << " s, worst share of depth-" << worst.max_depth
             << " simulation " << worst.complex_share << " (" << worst.complex_fit_iterations << " fit iterations)";
  });

  std::cout << (failures ? "ACCEPTANCE FAILED: " : "ACCEPTANCE PASSED: ") << failures << " failing criteria" << std::endl;
  return failures ? 1 : 0;
}
