#include <doctest.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <spawn.h>
#include <thread>

#include <httplib.h>

#include "support.hpp"
#include "twinadapt/net.hpp"
#include "twinadapt/scenario.hpp"

extern char** environ;

using namespace twinadapt;
using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("twinadapt_cli_" + std::to_string(::getpid()) + "_" + name); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(std::ifstream(p)); }

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::string exe = TWINADAPT_CLI;
  argv.push_back(exe.data());
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = -1;
  posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
  return pid;
}

int wait_exit(pid_t pid) {
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int free_port() {
  auto l = net::Listener::bind({"127.0.0.1", 0});
  return l.port();
}

}  // namespace

TEST_CASE("pool validate") {
  CHECK(run_cli("pool validate " + scenario_path("pool.json")).exit_code == 0);
  auto j = nlohmann::json::parse(std::ifstream(scenario_path("pool.json")));
  j["models"][0]["depth"] = 7;
  const auto bad = tmp("depth7.json");
  std::ofstream(bad) << j.dump();
  auto r = run_cli("pool validate " + q(bad));
  CHECK(r.exit_code != 0);
  CHECK(r.out.find("depth") != std::string::npos);
}

TEST_CASE("scenario run exit codes and report") {
  const auto report = tmp("pressure.json");
  auto r = run_cli("scenario run --config " + scenario_path("pressure.toml") + " --scenario " + scenario_path("pressure_drop.toml") +
                   " --report " + q(report));
  CHECK(r.exit_code == 0);
  auto j = read_json(report);
  CHECK(j["selected"] == "conveyor-d2+gripper-d3");
  CHECK(j["post_adaptation"]["max_D"].get<double>() <= 0.05);
  CHECK(j.contains("wall_clock"));

  CHECK(run_cli("scenario run --config " + scenario_path("depth2.toml") + " --scenario " + scenario_path("pressure_drop.toml"))
            .exit_code == 4);
  CHECK(run_cli("scenario run --config " + scenario_path("healthy_service.toml") + " --scenario " + scenario_path("healthy.toml"))
            .exit_code == 1);
  auto missing = run_cli("scenario run --config /nonexistent.toml --scenario " + scenario_path("healthy.toml"));
  CHECK(missing.exit_code == 2);
  CHECK(run_cli("scenario run --config " + scenario_path("pressure.toml") + " --scenario /nonexistent.toml").exit_code == 2);
}

TEST_CASE("scenario run is reproducible outside the wall-clock blocks") {
  const auto a = tmp("det_a.json"), b = tmp("det_b.json");
  const std::string args = "scenario run --config " + scenario_path("pressure.toml") + " --scenario " + scenario_path("pressure_drop.toml");
  REQUIRE(run_cli(args + " --report " + q(a)).exit_code == 0);
  REQUIRE(run_cli(args + " --report " + q(b)).exit_code == 0);
  CHECK(strip_wall_clock(read_json(a)).dump() == strip_wall_clock(read_json(b)).dump());
}

TEST_CASE("serve: config error, bind error, and a live status endpoint") {
  // missing manifest
  const auto cfg = tmp("nomanifest.toml");
  {
    std::ifstream in(scenario_path("pressure.toml"));
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    text.replace(text.find("pool.json"), 9, "/nowhere/pool.json");
    std::ofstream(cfg) << text;
  }
  auto r = run_cli("serve --config " + q(cfg) + " --http 127.0.0.1:0");
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("pool manifest not found") != std::string::npos);

  // port in use
  auto held = net::Listener::bind({"127.0.0.1", 0});
  auto busy = run_cli("serve --config " + scenario_path("pressure.toml") + " --http 127.0.0.1:" + std::to_string(held.port()));
  CHECK(busy.exit_code == 3);

  // running service answers within a second
  const int port = free_port();
  const auto start = std::chrono::steady_clock::now();
  pid_t pid = spawn({"serve", "--config", scenario_path("pressure.toml"), "--http", "127.0.0.1:" + std::to_string(port)});
  REQUIRE(pid > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(0, 100000);
  httplib::Result res;
  while (std::chrono::steady_clock::now() - start < std::chrono::seconds(3)) {
    res = cli.Get("/api/status");
    if (res) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(elapsed < std::chrono::seconds(1));
  kill(pid, SIGTERM);
  CHECK(wait_exit(pid) == 0);
}

TEST_CASE("plant to file, then replay a healthy run: no triggers") {
  const auto tel = tmp("healthy.jsonl");
  auto p = run_cli("plant --scenario " + scenario_path("healthy.toml") + " --out " + q(tel));
  REQUIRE(p.exit_code == 0);
  CHECK(read_telemetry_file(tel.string()).size() == run_plant_batch(load_scenario(scenario_path("healthy.toml"))).size());
  auto r = run_cli("replay --telemetry " + q(tel) + " --config " + scenario_path("healthy_service.toml"));
  CHECK(r.exit_code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["triggers"] == 0);
  CHECK(j["windows"] == 6);

  // recorded fault telemetry replays to the same adaptation
  const auto fault = tmp("fault.jsonl");
  REQUIRE(run_cli("plant --scenario " + scenario_path("pressure_drop.toml") + " --out " + q(fault)).exit_code == 0);
  const auto report = tmp("replay.json");
  REQUIRE(run_cli("replay --telemetry " + q(fault) + " --config " + scenario_path("pressure.toml") + " --report " + q(report)).exit_code == 0);
  CHECK(read_json(report)["selected"] == "conveyor-d2+gripper-d3");
}

TEST_CASE("plant streams frame lines to stdout and rejects bad speed") {
  auto r = run_cli("plant --scenario " + scenario_path("healthy.toml"));
  CHECK(r.exit_code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') ==
        static_cast<long>(run_plant_batch(load_scenario(scenario_path("healthy.toml"))).size()));
  CHECK(run_cli("plant --scenario " + scenario_path("healthy.toml") + " --speed fast").exit_code == 2);
}

TEST_CASE("bench prints a table with best not slower than worst") {
  const auto out = tmp("bench.json");
  auto r = run_cli("bench --scenario " + scenario_path("bench.toml") + " --cases best,worst --json " + q(out));
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("case") != std::string::npos);
  auto j = read_json(out);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][0]["case"] == "best");
  CHECK(j["rows"][0]["stage2_batches"] == 0);
  CHECK(j["rows"][1]["candidates"].get<int>() >= 3);
  CHECK(run_cli("bench --scenario " + scenario_path("bench.toml") + " --cases nope").exit_code == 2);
}
