// twinadapt: service, virtual plant, batch scenarios, replay, pool checks, bench, model server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cmath>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twinadapt/error.hpp"
#include "twinadapt/plant.hpp"
#include "twinadapt/remote.hpp"
#include "twinadapt/scenario.hpp"
#include "twinadapt/service.hpp"

using namespace twinadapt;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void install_signals() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
}

// single machine-readable line on stderr
int fail(int code, const std::string& kind, const std::string& reason) {
  std::cerr << nlohmann::json{{"error", kind}, {"reason", reason}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

int fail(int code, const Error& e) { return fail(code, std::string(to_string(e.kind())), e.detail()); }

void wait_for_signal() {
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

int cmd_serve(const std::string& config, const std::string& http) {
  std::unique_ptr<Service> svc;
  try {
    svc = std::make_unique<Service>(load_service_config(config));
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  net::Address addr;
  try {
    addr = net::parse_address(http);
    svc->start_http(addr);
  } catch (const Error& e) {
    return fail(kExitBind, "BindError", e.detail());
  }
  svc->start_telemetry();
  std::cout << nlohmann::json{{"listening", addr.host + ":" + std::to_string(svc->http_port())}}.dump() << std::endl;
  wait_for_signal();
  svc->stop();
  return kExitOk;
}

int cmd_plant(const std::string& scenario_path, const std::string& emit, const std::string& out_path, const std::string& speed_text) {
  PlantScenario scenario;
  double speed = 0.0;
  try {
    scenario = load_scenario(scenario_path);
    if (speed_text != "batch") {
      speed = std::stod(speed_text);
      if (!(speed > 0.0)) throw Error(ErrorKind::ConfigError, "--speed must be > 0 or 'batch'");
    }
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  } catch (const std::exception&) {
    return fail(kExitConfig, "ConfigError", "--speed must be a number or 'batch'");
  }

  if (!emit.empty()) {
    net::Listener listener;
    try {
      listener = net::Listener::bind(net::parse_address(emit));
    } catch (const Error& e) {
      return fail(kExitBind, "BindError", e.detail());
    }
    std::cout << nlohmann::json{{"emitting", "tcp://127.0.0.1:" + std::to_string(listener.port())}}.dump() << std::endl;
    Plant plant(scenario);
    while (!g_stop && !plant.finished()) {
      auto stream = listener.accept(std::chrono::milliseconds(200));
      if (!stream) continue;
      serve_plant(plant, *stream, speed, [] { return g_stop.load(); });
    }
    return kExitOk;
  }

  const auto frames = run_plant_batch(scenario);
  if (!out_path.empty()) {
    write_telemetry_file(out_path, frames);
    std::cout << nlohmann::json{{"frames", frames.size()}, {"out", out_path}}.dump() << std::endl;
  } else {
    for (const auto& f : frames) std::cout << frame_to_line(f) << '\n';
  }
  return kExitOk;
}

int cmd_scenario_run(const std::string& config, const std::string& scenario_path, const std::string& report) {
  ServiceConfig cfg;
  PlantScenario scenario;
  try {
    cfg = load_service_config(config);
    scenario = load_scenario(scenario_path);
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  ScenarioRun run;
  try {
    run = run_scenario(cfg, scenario);
  } catch (const Error& e) {
    return fail(e.kind() == ErrorKind::ConfigError ? kExitConfig : 1, e);
  }
  if (!report.empty()) write_json(report, run.report);
  nlohmann::json summary = {{"outcome", run.report["outcome"]},
                            {"selected", run.report["selected"]},
                            {"triggers", run.triggers},
                            {"cycles", run.records.size()},
                            {"exit_code", run.exit_code},
                            {"wall_s", run.wall_s}};
  if (run.report["post_adaptation"].is_object()) summary["post_adaptation_max_D"] = run.report["post_adaptation"]["max_D"];
  std::cout << summary.dump() << std::endl;
  return run.exit_code;
}

int cmd_replay(const std::string& telemetry, const std::string& config, const std::string& report) {
  ServiceConfig cfg;
  std::vector<SignalFrame> frames;
  try {
    cfg = load_service_config(config);
    frames = read_telemetry_file(telemetry);
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  double end = 0.0;
  for (const auto& f : frames) end = std::max(end, f.t);
  // close the window holding the last frame
  const double L = cfg.monitor.window_length;
  end = std::ceil((end + 1e-9) / L) * L;
  ScenarioRun run = run_frames(cfg, frames, end, {{"telemetry", telemetry}, {"frames", frames.size()}});
  if (!report.empty()) write_json(report, run.report);
  std::cout << nlohmann::json{{"windows", run.gap_reports.size()},
                              {"triggers", run.triggers},
                              {"cycles", run.records.size()},
                              {"outcome", run.report["outcome"]}}
                   .dump()
            << std::endl;
  return kExitOk;
}

int cmd_pool_validate(const std::string& manifest) {
  auto problems = validate_pool_manifest(manifest);
  if (problems.empty()) {
    std::cout << nlohmann::json{{"valid", true}, {"manifest", manifest}}.dump() << std::endl;
    return kExitOk;
  }
  std::cout << nlohmann::json{{"valid", false}, {"manifest", manifest}, {"problems", problems}}.dump(2) << std::endl;
  return kExitConfig;
}

int cmd_bench(const std::string& bench_file, const std::string& cases_text, int repeats, const std::string& json_out) {
  std::vector<BenchCase> cases;
  try {
    cases = load_bench(bench_file);
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  std::vector<std::string> wanted;
  std::stringstream ss(cases_text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) wanted.push_back(item);
  }
  std::vector<BenchRow> rows;
  try {
    for (const auto& name : wanted) {
      auto it = std::find_if(cases.begin(), cases.end(), [&](const BenchCase& c) { return c.name == name; });
      if (it == cases.end()) return fail(kExitConfig, "ConfigError", "bench case '" + name + "' not defined");
      rows.push_back(run_bench_case(*it, repeats));
    }
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  std::cout << bench_table(rows);
  nlohmann::json j = {{"rows", nlohmann::json::array()}};
  for (const auto& r : rows) j["rows"].push_back(bench_row_to_json(r));
  const BenchRow* best = nullptr;
  const BenchRow* worst = nullptr;
  for (const auto& r : rows) {
    if (r.name == "best") best = &r;
    if (r.name == "worst") worst = &r;
  }
  if (best && worst) {
    j["best_le_worst"] = best->cycle_s <= worst->cycle_s;
    std::cout << "best <= worst: " << (best->cycle_s <= worst->cycle_s ? "yes" : "no") << "  worst-case share of max-depth simulation: "
              << worst->complex_share << '\n';
  }
  if (!json_out.empty()) write_json(json_out, j);
  return kExitOk;
}

int cmd_model_server(const std::string& manifest, const std::string& listen) {
  std::shared_ptr<ModelPool> pool;
  try {
    pool = std::make_shared<ModelPool>(load_pool_manifest(manifest));
  } catch (const Error& e) {
    return fail(kExitConfig, e);
  }
  std::unique_ptr<RemoteModelServer> server;
  try {
    server = std::make_unique<RemoteModelServer>(pool, net::parse_address(listen));
  } catch (const Error& e) {
    return fail(kExitBind, "BindError", e.detail());
  }
  std::cout << nlohmann::json{{"endpoint", server->endpoint()}}.dump() << std::endl;
  wait_for_signal();
  server->stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  install_signals();
  CLI::App app{"Adaptive digital twin: model pool, gap monitor and PDCA adaptation engine"};
  app.require_subcommand(1);

  std::string config, http = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "Start engine, monitor and HTTP/SSE API");
  serve->add_option("--config", config, "Service config (TOML)")->required();
  serve->add_option("--http", http, "Listen address host:port");

  std::string scenario, emit, out, speed = "batch";
  auto* plant = app.add_subcommand("plant", "Run the virtual asset");
  plant->add_option("--scenario", scenario, "Scenario (TOML)")->required();
  auto* emit_opt = plant->add_option("--emit", emit, "Serve telemetry on tcp://host:port");
  plant->add_option("--out", out, "Write telemetry JSONL")->excludes(emit_opt);
  plant->add_option("--speed", speed, "Real-time factor k, or 'batch'");

  std::string report;
  auto* scen = app.add_subcommand("scenario", "Batch scenarios");
  scen->require_subcommand(1);
  auto* scen_run = scen->add_subcommand("run", "Plant and engine in one process, deterministic");
  scen_run->add_option("--config", config, "Service config (TOML)")->required();
  scen_run->add_option("--scenario", scenario, "Scenario (TOML)")->required();
  scen_run->add_option("--report", report, "Write the JSON report here");

  std::string telemetry;
  auto* replay = app.add_subcommand("replay", "Feed recorded telemetry through monitor and engine");
  replay->add_option("--telemetry", telemetry, "Telemetry JSONL")->required();
  replay->add_option("--config", config, "Service config (TOML)")->required();
  replay->add_option("--report", report, "Write the JSON report here");

  std::string manifest;
  auto* pool = app.add_subcommand("pool", "Model pool tools");
  pool->require_subcommand(1);
  auto* validate = pool->add_subcommand("validate", "Schema and invariant check");
  validate->add_option("manifest", manifest, "Pool manifest (JSON)")->required();

  std::string cases = "best,worst", json_out;
  int repeats = 1;
  auto* bench = app.add_subcommand("bench", "Automated adaptation timing, best vs worst case");
  bench->add_option("--scenario", scenario, "Bench definition (TOML)")->required();
  bench->add_option("--cases", cases, "Comma separated case names");
  bench->add_option("--repeats", repeats, "Runs per case; the fastest is reported")->check(CLI::PositiveNumber);
  bench->add_option("--json", json_out, "Write rows as JSON");

  std::string listen = "127.0.0.1:0";
  auto* ms = app.add_subcommand("model-server", "Serve pool models for decentralized simulation");
  ms->add_option("--pool", manifest, "Pool manifest (JSON)")->required();
  ms->add_option("--listen", listen, "Listen address host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*serve) return cmd_serve(config, http);
    if (*plant) return cmd_plant(scenario, emit, out, speed);
    if (*scen_run) return cmd_scenario_run(config, scenario, report);
    if (*replay) return cmd_replay(telemetry, config, report);
    if (*validate) return cmd_pool_validate(manifest);
    if (*bench) return cmd_bench(scenario, cases, repeats, json_out);
    if (*ms) return cmd_model_server(manifest, listen);
  } catch (const Error& e) {
    return fail(1, e);
  } catch (const std::exception& e) {
    return fail(1, "InternalError", e.what());
  }
  return 1;
}
