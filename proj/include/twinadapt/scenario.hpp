#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/plant.hpp"
#include "twinadapt/service.hpp"

namespace twinadapt {

// Exit codes shared by the command line entry points.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNoAdaptation = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBind = 3;
inline constexpr int kExitNoAdequate = 4;

struct ScenarioRun {
  std::vector<DeviationReport> gap_reports;
  std::vector<AdaptationRecord> records;
  std::size_t triggers = 0;
  double wall_s = 0.0;
  int exit_code = kExitNoAdaptation;
  // Deterministic body plus one top-level "wall_clock" block (and those inside records).
  nlohmann::json report;
};

// Feeds frames in time order through monitor and engine; each trigger runs to completion before
// the next frame, so the result depends only on the inputs.
ScenarioRun run_frames(const ServiceConfig& cfg, const std::vector<SignalFrame>& frames, double end_time,
                       nlohmann::json header = nlohmann::json::object());
// Batch plant plus run_frames.
ScenarioRun run_scenario(const ServiceConfig& cfg, const PlantScenario& scenario);

// Copy without any "wall_clock" member at any nesting level.
nlohmann::json strip_wall_clock(nlohmann::json j);

// ---- bench --------------------------------------------------------------

struct BenchCase {
  std::string name;
  std::filesystem::path scenario;
  std::filesystem::path config;
};

// TOML: one table per case, [<name>] scenario = "...", config = "..." (relative to the file).
std::vector<BenchCase> load_bench(const std::string& path);

struct BenchRow {
  std::string name;
  std::string outcome;
  std::string selected;
  double run_s = 0.0;    // whole scenario run
  double cycle_s = 0.0;  // adaptation cycles only
  double stage1_s = 0.0;
  double stage2_s = 0.0;
  double check_s = 0.0;
  std::size_t candidates = 0;
  std::size_t stage2_batches = 0;
  int max_depth = 0;
  std::size_t complex_fit_iterations = 0;  // fit iterations spent on max-depth candidates
  double complex_sim_s = 0.0;              // simulation wall time of max-depth candidates
  double complex_share = 0.0;              // complex_sim_s / cycle_s
};

BenchRow run_bench_case(const BenchCase& c, int repeats = 1);
nlohmann::json bench_row_to_json(const BenchRow& r);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace twinadapt
