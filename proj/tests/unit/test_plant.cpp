#include <doctest.h>

#include <thread>

#include "support.hpp"
#include "twinadapt/error.hpp"

using namespace twinadapt;
using namespace testing;

namespace {

PlantScenario base(double duration = 120.0) {
  PlantScenario s;
  s.duration = duration;
  s.seed = 5;
  return s;
}

std::size_t count(const std::vector<SignalFrame>& frames, const char* signal) {
  return static_cast<std::size_t>(std::count_if(frames.begin(), frames.end(), [&](const auto& f) { return f.signal == signal; }));
}

}  // namespace

TEST_CASE("arrival schedule") {
  ArrivalSchedule a;
  CHECK(a.arrivals(40) == std::vector<double>{5, 15, 25, 35});
  a.times = {1, 2};
  CHECK(a.arrivals(40) == std::vector<double>{1, 2});
}

TEST_CASE("healthy plant: every item picked, samples on the lattice") {
  auto frames = run_plant_batch(base(60));
  CHECK(count(frames, signals::kItemArrival) == 6);
  CHECK(count(frames, signals::kPickComplete) == 6);
  CHECK(count(frames, signals::kGripFailed) == 0);
  CHECK(count(frames, signals::kSuctionPressure) == 600);
  std::size_t k = 0;
  for (const auto& f : frames) {
    if (f.signal == signals::kSuctionPressure) CHECK(f.t == static_cast<double>(k++) * 0.1);
  }
  // conveyor exit exactly T_d after arrival
  for (const auto& f : frames) {
    if (f.signal == signals::kConveyorItemOut) CHECK(std::fmod(f.t - 1.5 - 5.0, 10.0) == doctest::Approx(0.0));
  }
}

TEST_CASE("same seed, same bytes; noise depends on seed") {
  auto s = base();
  s.noise_sigma = 0.5;
  CHECK(run_plant_batch(s) == run_plant_batch(s));
  auto other = s;
  other.seed = 6;
  CHECK(run_plant_batch(s) != run_plant_batch(other));
}

TEST_CASE("live injection equals a scheduled fault") {
  for (auto [param, value] : std::vector<std::pair<std::string, double>>{{"p_cap", 18.0}, {"T_d", 2.0}, {"tau", 0.9}}) {
    INFO(param);
    auto scheduled = base();
    scheduled.faults.push_back({60.0, param, value});
    const auto expected = run_plant_batch(scheduled);

    Plant plant(base());
    std::vector<SignalFrame> live;
    plant.run_until(60.0, live);
    CHECK(plant.now() == 60.0);
    plant.inject(param, value);
    plant.run_until(1e9, live);
    CHECK(plant.finished());
    CHECK(live == expected);
  }
}

TEST_CASE("fault monotonicity: less vacuum never means fewer failures") {
  std::size_t last_failed = 0, last_picked = 1000;
  for (double p_cap : {80.0, 60.0, 50.0, 48.5, 40.0, 30.0, 18.0, 10.0}) {
    auto s = base(180);
    s.faults.push_back({30.0, "p_cap", p_cap});
    auto frames = run_plant_batch(s);
    const auto failed = count(frames, signals::kGripFailed);
    const auto picked = count(frames, signals::kPickComplete);
    CHECK(failed >= last_failed);
    CHECK(picked <= last_picked);
    last_failed = failed;
    last_picked = picked;
  }
  CHECK(last_failed == 15);
}

TEST_CASE("the first failed grip follows the pressure fault within one item period") {
  auto frames = run_plant_batch(load_scenario(scenario_path("pressure_drop.toml")));
  auto it = std::find_if(frames.begin(), frames.end(), [](const auto& f) { return f.signal == signals::kGripFailed; });
  REQUIRE(it != frames.end());
  CHECK(it->t >= 60.0);
  CHECK(it->t < 70.0);
}

TEST_CASE("invalid scenarios and injections") {
  auto s = base();
  s.faults.push_back({10.0, "warp_factor", 9.0});
  CHECK_THROWS_AS(validate_scenario(s), Error);
  CHECK_THROWS_AS(scenario_from_toml("[plant]\nduration = -1\n"), Error);
  CHECK_THROWS_AS(scenario_from_toml("[plant]\nduration = 10\n[[fault]]\nt = 20\nparameter = \"p_cap\"\nvalue = 10\n"), Error);
  CHECK_THROWS_AS(scenario_from_toml("not toml ["), Error);
  Plant plant(base());
  try {
    plant.inject("warp_factor", 1.0);
    FAIL("expected UnknownParameter");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownParameter);
  }
  try {
    plant.inject("p_cap", -5.0);
    FAIL("expected ParamOutOfBounds");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParamOutOfBounds);
  }
}

TEST_CASE("telemetry stream carries every frame and accepts control ops") {
  auto s = base(40);
  const auto expected = run_plant_batch(s);
  auto listener = net::Listener::bind({"127.0.0.1", 0});
  std::thread server([&] {
    auto stream = listener.accept(std::chrono::milliseconds(5000));
    REQUIRE(stream);
    Plant plant(s);
    serve_plant(plant, *stream, 0.0);
  });
  auto client = net::LineStream::connect({"127.0.0.1", listener.port()}, std::chrono::milliseconds(2000));
  std::vector<SignalFrame> got;
  while (auto line = client.read_line(std::chrono::milliseconds(5000))) {
    auto j = nlohmann::json::parse(*line);
    if (j.contains("signal")) got.push_back(frame_from_json(j));
  }
  server.join();
  CHECK(got == expected);
}

TEST_CASE("control op acknowledgement") {
  auto listener = net::Listener::bind({"127.0.0.1", 0});
  std::thread server([&] {
    auto stream = listener.accept(std::chrono::milliseconds(5000));
    REQUIRE(stream);
    Plant plant(base(3600));
    serve_plant(plant, *stream, 50.0);
  });
  auto client = net::LineStream::connect({"127.0.0.1", listener.port()}, std::chrono::milliseconds(2000));
  client.write_line(R"({"op":"inject","param":"p_cap","value":18})");
  client.write_line(R"({"op":"inject","param":"nonsense","value":1})");
  std::vector<nlohmann::json> acks;
  while (acks.size() < 2) {
    auto line = client.read_line(std::chrono::milliseconds(5000));
    REQUIRE(line);
    auto j = nlohmann::json::parse(*line);
    if (j.contains("ok")) acks.push_back(j);
  }
  CHECK(acks[0]["ok"] == true);
  CHECK(acks[1]["ok"] == false);
  client.close();
  server.join();
}
