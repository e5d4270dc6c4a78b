// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace ramanmatch {

ConformalCalibrator calibrate_scores(std::vector<double> scores, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must be in (0, 1)");
  }
  if (scores.empty()) throw CalibrationError("no calibration scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw CalibrationError("non-finite calibration score");
  }
  std::sort(scores.begin(), scores.end());
  ConformalCalibrator cal;
  cal.alpha = alpha;
  cal.calibration_size = scores.size();
  const auto n = static_cast<double>(scores.size());
  if (n < std::ceil(1.0 / alpha)) {
    cal.degenerate = true;
    cal.tau = -std::numeric_limits<double>::infinity();
  } else {
    const auto k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(alpha * (n + 1.0))), 1, scores.size());
    cal.tau = scores[k - 1];
  }
  cal.calibration_scores = std::move(scores);
  return cal;
}

double true_class_score(const MatchResult& result, const std::string& truth) {
  for (const auto& cs : result.ranked) {
    if (cs.label == truth) return cs.p;
  }
  throw CalibrationError("class '" + truth + "' of '" + result.query_id +
                         "' is not in the reference library");
}

ConformalCalibrator calibrate(const std::vector<MatchResult>& results,
                              const std::vector<std::string>& truths, double alpha,
                              bool augmented) {
  if (augmented) {
    throw CalibrationError(
        "calibration data is augmented and not exchangeable with test data");
  }
  if (results.size() != truths.size()) {
    throw std::invalid_argument("result and label counts differ");
  }
  std::vector<double> scores;
  scores.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    scores.push_back(true_class_score(results[i], truths[i]));
  }
  return calibrate_scores(std::move(scores), alpha);
}

bool PredictionSet::contains(std::string_view label) const {
  return std::find(classes.begin(), classes.end(), label) != classes.end();
}

PredictionSet predict_set(const MatchResult& result, const ConformalCalibrator& cal) {
  if (result.ranked.empty()) throw std::invalid_argument("empty match result");
  PredictionSet set;
  set.alpha = cal.alpha;
  for (std::size_t i = 0; i < result.ranked.size(); ++i) {
    const auto& cs = result.ranked[i];
    if (i == 0 || cs.p >= cal.tau) {
      set.classes.push_back(cs.label);
      set.scores.push_back(cs.p);
    }
  }
  return set;
}

double empirical_coverage(std::span<const PredictionSet> sets,
                          std::span<const std::string> truths) {
  if (sets.size() != truths.size()) {
    throw std::invalid_argument("prediction set and label counts differ");
  }
  if (sets.empty()) throw std::invalid_argument("coverage of no prediction sets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].contains(truths[i])) ++hit;
  }
  return double(hit) / double(sets.size());
}

double average_set_size(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw std::invalid_argument("average size of no prediction sets");
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return double(total) / double(sets.size());
}

std::string to_json_line(const PredictionSet& set, const std::string& query_id) {
  nlohmann::ordered_json j;
  j["query_id"] = query_id;
  j["alpha"] = set.alpha;
  auto members = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < set.size(); ++i) members.push_back({set.classes[i], set.scores[i]});
  j["set"] = std::move(members);
  return j.dump();
}

}  // namespace ramanmatch
