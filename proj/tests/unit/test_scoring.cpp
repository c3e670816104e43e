#include <doctest.h>

#include <random>

#include "twinadapt/error.hpp"
#include "twinadapt/scoring.hpp"

using namespace twinadapt;

namespace {

CandidateEvaluation cand(const std::string& id, double D, double T, double C, int depth = 4) {
  CandidateEvaluation e;
  e.config_id = id;
  e.D = D;
  e.T = T;
  e.C = C;
  e.total_depth = depth;
  return e;
}

const CandidateEvaluation& selected(const Ranking& r) { return r.ranked.at(*r.selected); }

const CandidateEvaluation& by_id(const Ranking& r, const std::string& id) {
  for (const auto& e : r.ranked) {
    if (e.config_id == id) return e;
  }
  throw std::runtime_error("missing " + id);
}

std::vector<CandidateEvaluation> random_set(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CandidateEvaluation> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(cand("c" + std::to_string(i), 0.04 * u(rng), 10 + 90 * u(rng), 1 + 9 * u(rng),
                       2 + static_cast<int>(i % 3)));
  }
  return out;
}

}  // namespace

TEST_CASE("normalization exactness") {
  auto n = min_max_normalize({2, 4, 6});
  CHECK(n == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(min_max_normalize({3, 3, 3}) == std::vector<double>{0, 0, 0});
  CHECK(min_max_normalize({}).empty());
}

TEST_CASE("weights are normalized and validated") {
  auto w = normalize_weights(1, 1, 8);
  CHECK(w.time == doctest::Approx(0.1));
  CHECK(w.cost == doctest::Approx(0.1));
  CHECK(w.quality == doctest::Approx(0.8));
  CHECK(w.time + w.cost + w.quality == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_weights(0, 0, 0), Error);
  CHECK_THROWS_AS(normalize_weights(-1, 1, 1), Error);
  CHECK_THROWS_AS(normalize_weights(std::nan(""), 1, 1), Error);
}

TEST_CASE("affine transforms of one raw metric change nothing") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> scale(0.1, 50.0), shift(-20.0, 20.0);
  const Weights w = normalize_weights(0.3, 0.3, 0.4);
  for (int trial = 0; trial < 200; ++trial) {
    auto base = random_set(rng, 5);
    const double a = scale(rng), b = shift(rng);
    const int metric = trial % 3;
    // D decides adequacy too; transform the threshold alongside it
    const double eps = 0.05;
    const double eps_t = metric == 0 ? a * eps + b : eps;
    auto moved = base;
    for (auto& e : moved) {
      double& x = metric == 0 ? e.D : metric == 1 ? e.T : e.C;
      x = a * x + b;
    }
    auto r0 = rank_candidates(base, w, eps);
    auto r1 = rank_candidates(moved, w, eps_t);
    REQUIRE(r0.selected);
    REQUIRE(r1.selected);
    CHECK(selected(r0).config_id == selected(r1).config_id);
    for (const auto& e : r0.ranked) {
      const auto& f = by_id(r1, e.config_id);
      CHECK(f.D_hat == doctest::Approx(e.D_hat).epsilon(1e-9));
      CHECK(f.T_hat == doctest::Approx(e.T_hat).epsilon(1e-9));
      CHECK(f.C_hat == doctest::Approx(e.C_hat).epsilon(1e-9));
    }
  }
}

TEST_CASE("pure quality weight selects min D, pure cost weight selects min C among adequate") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto set = random_set(rng, 6);
    set[trial % 6].D = 0.5;  // one inadequate, and it is the cheapest
    set[trial % 6].C = 0.0;
    auto rq = rank_candidates(set, normalize_weights(0, 0, 1), 0.05);
    auto rc = rank_candidates(set, normalize_weights(0, 1, 0), 0.05);
    double min_d = 1e9, min_c = 1e9;
    for (const auto& e : set) {
      if (e.D > 0.05) continue;
      min_d = std::min(min_d, e.D);
      min_c = std::min(min_c, e.C);
    }
    CHECK(selected(rq).D == min_d);
    CHECK(selected(rc).C == min_c);
    CHECK(selected(rc).adequate);
  }
}

TEST_CASE("equal metrics: all normalized values zero, shallowest wins") {
  std::vector<CandidateEvaluation> set = {cand("b", 0.01, 10, 2, 6), cand("a", 0.01, 10, 2, 5), cand("c", 0.01, 10, 2, 5)};
  auto r = rank_candidates(set, Weights{}, 0.05);
  for (const auto& e : r.ranked) {
    CHECK(e.D_hat == 0.0);
    CHECK(e.T_hat == 0.0);
    CHECK(e.C_hat == 0.0);
    CHECK(e.score == 0.0);
  }
  REQUIRE(r.selected);
  CHECK(*r.selected == 0);
  CHECK(selected(r).total_depth == 5);
  CHECK(selected(r).config_id == "a");
}

TEST_CASE("adequacy, failures and ranking order") {
  std::vector<CandidateEvaluation> set = {cand("good", 0.01, 50, 5), cand("bad", 0.2, 10, 1), cand("cheap", 0.04, 10, 1)};
  set.push_back(cand("broken", 0, 0, 0));
  set.back().failed = "SimulationFailure";
  auto r = rank_candidates(set, normalize_weights(0.2, 0.2, 0.6), 0.05);
  REQUIRE(r.ranked.size() == 4);
  CHECK(r.ranked.back().config_id == "broken");
  CHECK_FALSE(by_id(r, "bad").adequate);
  CHECK(by_id(r, "good").adequate);
  // normalization ignores the failed candidate
  CHECK(by_id(r, "bad").D_hat == 1.0);
  CHECK(by_id(r, "good").D_hat == 0.0);
  REQUIRE(r.selected);
  CHECK(*r.selected == 0);

  auto none = rank_candidates({cand("x", 0.3, 1, 1)}, Weights{}, 0.05);
  CHECK_FALSE(none.selected);
}
