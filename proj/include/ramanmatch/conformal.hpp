// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ramanmatch/matcher.hpp"

namespace ramanmatch {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConformalCalibrator {
  double alpha = 0.1;
  double tau = 0.0;
  std::size_t calibration_size = 0;
  std::vector<double> calibration_scores;  // ascending
  /// Too few calibration points for this alpha: tau is -inf and every class
  /// is admitted.
  bool degenerate = false;
};

/// tau is the floor(alpha (n + 1))-th smallest score, the index clamped to
/// [1, n].
ConformalCalibrator calibrate_scores(std::vector<double> scores, double alpha);

/// Score of `truth` in `result`; throws if the class was not ranked.
double true_class_score(const MatchResult& result, const std::string& truth);

/// Calibrates on the true-class scores of held-out results. Refuses data
/// flagged as augmented, which is not exchangeable with real test spectra.
ConformalCalibrator calibrate(const std::vector<MatchResult>& results,
                              const std::vector<std::string>& truths, double alpha,
                              bool augmented = false);

struct PredictionSet {
  std::vector<std::string> classes;  // by descending score
  std::vector<double> scores;
  double alpha = 0.0;

  std::size_t size() const { return classes.size(); }
  bool contains(std::string_view label) const;
};

/// Every class scoring at least tau, plus the top-ranked class.
PredictionSet predict_set(const MatchResult& result, const ConformalCalibrator& cal);

double empirical_coverage(std::span<const PredictionSet> sets,
                          std::span<const std::string> truths);
double average_set_size(std::span<const PredictionSet> sets);

/// {"query_id", "alpha", "set": [[label, p], ...]}
std::string to_json_line(const PredictionSet& set, const std::string& query_id);

}  // namespace ramanmatch
