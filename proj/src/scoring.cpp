#include "twinadapt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "twinadapt/error.hpp"

namespace twinadapt {

Weights normalize_weights(double time, double cost, double quality) {
  for (double w : {time, cost, quality}) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::InvalidRequest, "weights must be finite and >= 0");
  }
  const double sum = time + cost + quality;
  if (!(sum > 0.0)) throw Error(ErrorKind::InvalidRequest, "weights must not all be zero");
  return {time / sum, cost / sum, quality / sum};
}

std::vector<double> min_max_normalize(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / span;
  return out;
}

Ranking rank_candidates(std::vector<CandidateEvaluation> evals, const Weights& w, double epsilon_accept) {
  std::vector<double> d, t, c;
  for (const auto& e : evals) {
    if (e.failed) continue;
    d.push_back(e.D);
    t.push_back(e.T);
    c.push_back(e.C);
  }
  const auto dn = min_max_normalize(d), tn = min_max_normalize(t), cn = min_max_normalize(c);
  std::size_t k = 0;
  for (auto& e : evals) {
    if (e.failed) {
      e.adequate = false;
      e.D_hat = e.T_hat = e.C_hat = e.score = 0.0;
      continue;
    }
    e.D_hat = dn[k];
    e.T_hat = tn[k];
    e.C_hat = cn[k];
    ++k;
    e.score = w.quality * e.D_hat + w.time * e.T_hat + w.cost * e.C_hat;
    e.adequate = e.D <= epsilon_accept;
  }

  auto key = [](const CandidateEvaluation& e) {
    return std::make_tuple(e.failed.has_value(), !e.adequate, e.score, e.total_depth, e.C, e.config_id);
  };
  std::sort(evals.begin(), evals.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });

  Ranking r;
  std::optional<double> best;
  for (const auto& e : evals) {
    if (e.adequate && (!best || e.score < *best)) best = e.score;
  }
  if (best) {
    std::size_t pick = evals.size();
    for (std::size_t i = 0; i < evals.size(); ++i) {
      const auto& e = evals[i];
      if (!e.adequate || e.score > *best + 1e-12) continue;
      if (pick == evals.size() ||
          std::tie(e.total_depth, e.C, e.config_id) < std::tie(evals[pick].total_depth, evals[pick].C, evals[pick].config_id)) {
        pick = i;
      }
    }
    std::rotate(evals.begin(), evals.begin() + static_cast<std::ptrdiff_t>(pick), evals.begin() + static_cast<std::ptrdiff_t>(pick) + 1);
    r.selected = 0;
  }
  r.ranked = std::move(evals);
  return r;
}

nlohmann::json weights_to_json(const Weights& w) {
  return {{"time", w.time}, {"cost", w.cost}, {"quality", w.quality}};
}

nlohmann::json evaluation_to_json(const CandidateEvaluation& e) {
  nlohmann::json j;
  j["config_id"] = e.config_id;
  j["configuration"] = configuration_to_json(e.config);
  j["total_depth"] = e.total_depth;
  j["raw"] = {{"D", e.D}, {"T", e.T}, {"C", e.C}};
  j["normalized"] = {{"D", e.D_hat}, {"T", e.T_hat}, {"C", e.C_hat}};
  j["score"] = e.score;
  j["adequate"] = e.adequate;
  j["failed"] = e.failed ? nlohmann::json(*e.failed) : nlohmann::json(nullptr);
  if (e.fit) j["fit"] = fit_result_to_json(*e.fit);
  return j;
}

}  // namespace twinadapt
