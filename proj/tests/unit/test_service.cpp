#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "support.hpp"
#include "twinadapt/error.hpp"
#include "twinadapt/service.hpp"

using namespace twinadapt;
using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("twinadapt_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ServiceConfig pressure_config(const fs::path& storage = {}) {
  auto cfg = load_service_config(scenario_path("pressure.toml"));
  cfg.storage_dir = storage.string();
  return cfg;
}

void feed(Service& svc, const std::string& scenario) {
  auto s = load_scenario(scenario_path(scenario));
  for (const auto& f : run_plant_batch(s)) {
    svc.ingest(f);
    svc.process_windows(true);
  }
  svc.close_through(s.duration);
  svc.process_windows(true);
}

struct SseEvent {
  std::uint64_t id = 0;
  std::string type;
  nlohmann::json data;
};

// Reads events until done(events) holds.
std::vector<SseEvent> read_sse(int port, const std::function<bool(const std::vector<SseEvent>&)>& done,
                               const std::string& last_event_id = "") {
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(5, 0);
  httplib::Headers headers;
  if (!last_event_id.empty()) headers.emplace("Last-Event-ID", last_event_id);
  std::vector<SseEvent> events;
  std::string buffer;
  cli.Get("/api/events", headers, [&](const char* data, std::size_t n) {
    buffer.append(data, n);
    std::size_t end;
    while ((end = buffer.find("\n\n")) != std::string::npos) {
      std::string block = buffer.substr(0, end);
      buffer.erase(0, end + 2);
      SseEvent e;
      std::istringstream in(block);
      for (std::string line; std::getline(in, line);) {
        if (line.rfind("id: ", 0) == 0) e.id = std::stoull(line.substr(4));
        if (line.rfind("event: ", 0) == 0) e.type = line.substr(7);
        if (line.rfind("data: ", 0) == 0) e.data = nlohmann::json::parse(line.substr(6));
      }
      if (e.id) events.push_back(std::move(e));
    }
    return !done(events);
  });
  return events;
}

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = pressure_config();
  CHECK(fs::path(cfg.pool_manifest).is_absolute());
  CHECK(cfg.active.bindings.at("gripper").model_id == "gripper-d2");
  REQUIRE(cfg.active.couplings.size() == 1);
  CHECK(cfg.active.couplings[0] == Coupling{"conveyor", "item_out", "gripper", "item_in"});
  CHECK(cfg.engine.weights.quality == doctest::Approx(0.8));
  CHECK(cfg.engine.directives.at("gripper") == DepthDirective::Increase);
  CHECK(cfg.monitor.window_length == 30.0);
  CHECK(cfg.engine.monitor.epsilon == cfg.monitor.epsilon);

  const std::string base = "[pool]\nmanifest = \"pool.json\"\n[application]\nrequired_phenomena = [\"pick_timing\"]\n"
                           "[active]\nbindings = { gripper = \"gripper-d2\" }\n";
  CHECK_NOTHROW(service_config_from_toml(base));
  CHECK_THROWS_AS(service_config_from_toml("[application]\n"), Error);
  CHECK_THROWS_AS(service_config_from_toml(base + "[engine]\nweights = { time = 0, cost = 0, quality = 0 }\n"), Error);
  CHECK_THROWS_AS(service_config_from_toml(base + "[engine]\ndirectives = { gripper = \"sideways\" }\n"), Error);
  CHECK_THROWS_AS(service_config_from_toml(base + "[monitor]\nepsilon = -1\n"), Error);
  CHECK_THROWS_AS(service_config_from_toml("[pool\n"), Error);
}

TEST_CASE("missing pool manifest is a config error") {
  auto cfg = pressure_config();
  cfg.pool_manifest = "/nowhere/pool.json";
  try {
    Service svc(cfg);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(e.detail().find("pool manifest not found") != std::string::npos);
  }
  auto bad = pressure_config();
  bad.active.bindings["gripper"].model_id = "ghost";
  CHECK_THROWS_AS(Service{bad}, Error);
}

TEST_CASE("jsonl store survives a torn write") {
  auto dir = fresh_dir("store");
  {
    JsonlStore s(dir / "h.jsonl");
    s.append({{"n", 1}});
    s.append({{"n", 2}});
    CHECK(s.size() == 2);
  }
  std::ofstream(dir / "h.jsonl", std::ios::app) << "{\"n\": 3, \"trunc";
  JsonlStore again(dir / "h.jsonl");
  CHECK(again.size() == 2);
  CHECK(again.last(1)[0]["n"] == 2);
  CHECK(again.last(10).size() == 2);
  CHECK(JsonlStore{}.size() == 0);
}

TEST_CASE("http api") {
  auto dir = fresh_dir("http");
  Service svc(pressure_config(dir));
  const auto t0 = std::chrono::steady_clock::now();
  svc.start_http({"127.0.0.1", 0});
  const int port = svc.http_port();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto status = cli.Get("/api/status");
  REQUIRE(status);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
  CHECK(status->status == 200);
  auto sj = nlohmann::json::parse(status->body);
  CHECK(sj["active"]["id"] == "initial");
  CHECK(sj["active"]["models"]["gripper"]["depth"] == 2);
  CHECK(sj["adaptation_in_progress"] == false);
  CHECK(sj["cycles_run"] == 0);
  CHECK(sj.contains("uptime_s"));

  auto pool = cli.Get("/api/pool");
  REQUIRE(pool);
  CHECK(nlohmann::json::parse(pool->body)["models"].size() == 4);
  CHECK(cli.Get("/api/pool/gripper-d3")->status == 200);
  CHECK(cli.Get("/api/pool/ghost")->status == 404);
  CHECK(cli.Get("/api/history/cycle-9999")->status == 404);
  CHECK(nlohmann::json::parse(cli.Get("/api/history")->body).empty());
  CHECK(nlohmann::json::parse(cli.Get("/api/configurations")->body)["active"].size() == 1);

  SUBCASE("goal") {
    auto ok = cli.Post("/api/goal", R"({"weights":{"time":1,"cost":1,"quality":8},"directives":{"gripper":"increase"}})",
                       "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    auto g = nlohmann::json::parse(cli.Get("/api/status")->body)["goal"];
    CHECK(g["weights"]["time"].get<double>() == doctest::Approx(0.1));
    CHECK(g["weights"]["quality"].get<double>() == doctest::Approx(0.8));
    CHECK(g["directives"]["gripper"] == "increase");
    CHECK(cli.Post("/api/goal", R"({"weights":[0,0,0]})", "application/json")->status == 422);
    CHECK(cli.Post("/api/goal", R"({"weights":{"time":-1,"cost":1,"quality":1}})", "application/json")->status == 422);
    CHECK(cli.Post("/api/goal", "not json", "application/json")->status == 422);
    CHECK(cli.Post("/api/goal", R"({"directives":{"gripper":"up"}})", "application/json")->status == 422);
  }
  SUBCASE("malformed triggers") {
    CHECK(cli.Post("/api/trigger", "[1,2]", "application/json")->status == 422);
    CHECK(cli.Post("/api/trigger", R"({"window":[1]})", "application/json")->status == 422);
    CHECK(cli.Post("/api/trigger", R"({"kind":"sideways"})", "application/json")->status == 422);
    // no telemetry recorded yet
    CHECK(cli.Post("/api/trigger", "{}", "application/json")->status == 422);
  }

  // a second service on the same port must fail to bind
  Service other(pressure_config());
  CHECK_THROWS_AS(other.start_http({"127.0.0.1", port}), Error);
}

TEST_CASE("end to end through the api: history, gap, manual replay, sse resume") {
  auto dir = fresh_dir("e2e");
  Service svc(pressure_config(dir));
  svc.start_http({"127.0.0.1", 0});
  httplib::Client cli("127.0.0.1", svc.http_port());
  feed(svc, "pressure_drop.toml");

  auto hist = nlohmann::json::parse(cli.Get("/api/history?n=1")->body);
  REQUIRE(hist.size() == 1);
  const auto& rec = hist[0];
  CHECK(rec["outcome"] == "activated");
  CHECK(rec["selected"] == "conveyor-d2+gripper-d3");
  REQUIRE_FALSE(rec["diagnosis"].empty());
  CHECK(rec["diagnosis"][0]["parameter"] == "gripper.p_cap");
  CHECK(cli.Get("/api/history/cycle-0001")->status == 200);

  auto gap = nlohmann::json::parse(cli.Get("/api/gap?n=3")->body);
  CHECK(gap.size() == 3);
  CHECK(nlohmann::json::parse(cli.Get("/api/gap?n=100")->body).size() == 6);
  auto status = nlohmann::json::parse(cli.Get("/api/status")->body);
  CHECK(status["active"]["id"] == "conveyor-d2+gripper-d3@cycle-0001");
  CHECK(status["D"].get<double>() < 0.05);
  CHECK(nlohmann::json::parse(cli.Get("/api/configurations")->body)["retired"].size() == 1);

  // replay a stored gap report as a manual trigger
  auto stored = nlohmann::json::parse(cli.Get("/api/gap?n=100")->body)[2];
  auto accepted = cli.Post("/api/trigger", nlohmann::json{{"report", stored}}.dump(), "application/json");
  REQUIRE(accepted);
  CHECK(accepted->status == 202);
  auto ack = nlohmann::json::parse(accepted->body);
  CHECK(ack["cycle_id"] == "cycle-0002");

  // full stream up to the completion of the manual cycle, then resume from the middle
  auto everything = read_sse(svc.http_port(), [](const std::vector<SseEvent>& ev) {
    return !ev.empty() && ev.back().type == "cycle_completed" && ev.back().data["cycle_id"] == "cycle-0002";
  });
  REQUIRE(everything.size() > 10);
  bool saw_gap = false, saw_completed = false;
  for (std::size_t i = 1; i < everything.size(); ++i) CHECK(everything[i].id == everything[i - 1].id + 1);
  for (const auto& e : everything) {
    saw_gap |= e.type == "gap_report";
    saw_completed |= e.type == "cycle_completed";
  }
  CHECK(saw_gap);
  CHECK(saw_completed);

  const auto mid = everything[everything.size() / 2];
  const std::size_t rest = everything.size() - everything.size() / 2 - 1;
  auto resumed = read_sse(
      svc.http_port(), [&](const std::vector<SseEvent>& ev) { return ev.size() >= rest; }, std::to_string(mid.id));
  REQUIRE_FALSE(resumed.empty());
  CHECK(resumed.front().id == mid.id + 1);
  for (std::size_t i = 0; i < resumed.size() && i + everything.size() / 2 + 1 < everything.size(); ++i) {
    CHECK(resumed[i].id == everything[everything.size() / 2 + 1 + i].id);
    CHECK(resumed[i].type == everything[everything.size() / 2 + 1 + i].type);
  }

  // the history file holds each completed cycle exactly once
  svc.stop();
  auto lines = JsonlStore::read_file(dir / "history.jsonl");
  std::set<std::string> ids;
  for (const auto& l : lines) CHECK(ids.insert(l["cycle_id"].get<std::string>()).second);
  CHECK(ids.count("cycle-0001") == 1);
}

TEST_CASE("telemetry over tcp drives the monitor") {
  auto scenario = load_scenario(scenario_path("pressure_drop.toml"));
  auto listener = net::Listener::bind({"127.0.0.1", 0});
  std::jthread plant_thread([&] {
    auto stream = listener.accept(std::chrono::milliseconds(10000));
    if (!stream) return;
    Plant plant(scenario);
    serve_plant(plant, *stream, 0.0);
    // keep the connection open until the service hangs up
    while (stream->read_line(std::chrono::milliseconds(10000))) {
    }
  });
  auto cfg = pressure_config();
  cfg.telemetry_source = "tcp://127.0.0.1:" + std::to_string(listener.port());
  Service svc(cfg);
  svc.start_telemetry();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  auto settled = [&] {
    auto s = svc.engine().status();
    return !svc.completed().empty() && !s.in_progress && s.queued == 0 && svc.monitor().pending() == 0;
  };
  while (!settled() && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  // the live monitor keeps judging windows while the first cycle runs; later breaches are
  // already explained by the new configuration when their cycles plan
  auto done = svc.completed();
  REQUIRE_FALSE(done.empty());
  CHECK(done[0].outcome == "activated");
  CHECK(*done[0].selected == "conveyor-d2+gripper-d3");
  for (std::size_t i = 1; i < done.size(); ++i) CHECK(done[i].outcome == "no_adaptation_needed");
  CHECK(svc.engine().status().active.id == "conveyor-d2+gripper-d3@cycle-0001");
  svc.stop();
}
