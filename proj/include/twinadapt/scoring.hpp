#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/estimation.hpp"
#include "twinadapt/pool.hpp"

namespace twinadapt {

// Magic-triangle weights; always normalized to sum 1.
struct Weights {
  double time = 0.2;
  double cost = 0.2;
  double quality = 0.6;

  bool operator==(const Weights&) const = default;
};

// Throws InvalidRequest on negative, non-finite or all-zero input.
Weights normalize_weights(double time, double cost, double quality);

struct CandidateEvaluation {
  std::string config_id;
  ModelConfiguration config;
  int total_depth = 0;
  double D = 0.0;  // aggregate deviation on the recorded window
  double T = 0.0;  // sum of compute_rating x window length
  double C = 0.0;  // sum of cost_rating
  double D_hat = 0.0, T_hat = 0.0, C_hat = 0.0;
  double score = 0.0;
  bool adequate = false;
  std::optional<std::string> failed;
  std::optional<FitResult> fit;
  double wall_time_s = 0.0;  // metadata only
};

// (x - min) / (max - min); all zero when max == min.
std::vector<double> min_max_normalize(const std::vector<double>& values);

struct Ranking {
  std::vector<CandidateEvaluation> ranked;  // selected first when there is one
  std::optional<std::size_t> selected;
};

// Normalizes over the non-failed candidates, scores, marks adequacy (D <= epsilon_accept) and ranks by
// (failed, !adequate, score, depth, C, id). Selection is the score-argmin among adequate candidates;
// scores within 1e-12 tie and fall back to lower total depth, then lower C, then id.
Ranking rank_candidates(std::vector<CandidateEvaluation> evals, const Weights& w, double epsilon_accept);

nlohmann::json weights_to_json(const Weights& w);
nlohmann::json evaluation_to_json(const CandidateEvaluation& e);

}  // namespace twinadapt
