// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ramanmatch/conformal.hpp"

using namespace ramanmatch;

namespace {

MatchResult result(std::vector<std::pair<std::string, double>> scores, std::string id = "q") {
  MatchResult r;
  r.query_id = std::move(id);
  std::sort(scores.begin(), scores.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [label, p] : scores) r.ranked.push_back({label, p});
  r.predicted = r.ranked.front().label;
  return r;
}

}  // namespace

TEST_CASE("constant calibration scores") {
  auto cal = calibrate_scores(std::vector<double>(50, 0.9), 0.1);
  CHECK(cal.tau == 0.9);
  CHECK_FALSE(cal.degenerate);
  auto set = predict_set(result({{"A", 0.95}, {"B", 0.9}, {"C", 0.89}}), cal);
  CHECK(set.classes == std::vector<std::string>{"A", "B"});
}

TEST_CASE("finite-sample quantile index") {
  std::vector<double> scores;
  for (int i = 100; i >= 1; --i) scores.push_back(i / 100.0);
  auto cal = calibrate_scores(scores, 0.10);
  // floor(0.1 * 101) = 10th smallest
  std::sort(scores.begin(), scores.end());
  CHECK(cal.tau == scores[9]);
  CHECK(cal.tau == doctest::Approx(0.10));
  CHECK(cal.calibration_size == 100);

  auto tight = calibrate_scores(scores, 0.99);
  CHECK(tight.tau == 0.99);
  auto set = predict_set(result({{"A", 0.97}, {"B", 0.96}, {"C", 0.5}}), tight);
  CHECK(set.size() == 1);
}

TEST_CASE("too few calibration points admit every class") {
  auto cal = calibrate_scores({0.5, 0.6, 0.7}, 0.1);
  CHECK(cal.degenerate);
  CHECK(cal.tau == -std::numeric_limits<double>::infinity());
  auto set = predict_set(result({{"A", 0.2}, {"B", 0.1}, {"C", 1e-9}}), cal);
  CHECK(set.size() == 3);
  CHECK_THROWS_AS(calibrate_scores({}, 0.1), CalibrationError);
  CHECK_THROWS_AS(calibrate_scores({0.5}, 1.0), std::invalid_argument);
}

TEST_CASE("prediction sets") {
  ConformalCalibrator cal;
  cal.tau = 0.6;
  auto set = predict_set(result({{"A", 0.9}, {"B", 0.7}, {"C", 0.2}}), cal);
  CHECK(set.classes == std::vector<std::string>{"A", "B"});
  CHECK(set.scores == std::vector<double>{0.9, 0.7});
  cal.tau = 0.95;
  auto top = predict_set(result({{"A", 0.9}, {"B", 0.7}}), cal);
  CHECK(top.classes == std::vector<std::string>{"A"});
  cal.tau = std::numeric_limits<double>::infinity();
  CHECK(predict_set(result({{"A", 0.9}, {"B", 0.7}}), cal).size() == 1);
  CHECK(to_json_line(top, "x") == R"({"query_id":"x","alpha":0.1,"set":[["A",0.9]]})");
}

TEST_CASE("calibration from match results") {
  std::vector<MatchResult> rs{result({{"A", 0.9}, {"B", 0.2}}), result({{"A", 0.3}, {"B", 0.8}})};
  std::vector<std::string> truth{"A", "A"};
  auto cal = calibrate(rs, truth, 0.5);
  CHECK(cal.calibration_scores == std::vector<double>{0.3, 0.9});
  CHECK_THROWS_AS(calibrate(rs, truth, 0.5, true), CalibrationError);
  std::vector<std::string> missing{"A", "Z"};
  CHECK_THROWS_AS(calibrate(rs, missing, 0.5), CalibrationError);
}

TEST_CASE("coverage and set size") {
  std::vector<PredictionSet> sets(3);
  sets[0].classes = {"A"};
  sets[1].classes = {"B", "A"};
  sets[2].classes = {"C"};
  std::vector<std::string> truth{"A", "A", "C"};
  CHECK(empirical_coverage(sets, truth) == 1.0);
  CHECK(average_set_size(sets) == doctest::Approx(4.0 / 3.0));
  std::vector<std::string> wrong{"B", "C", "C"};
  CHECK(empirical_coverage(sets, wrong) == doctest::Approx(1.0 / 3.0));
  std::vector<PredictionSet> singles(4);
  for (auto& s : singles) s.classes = {"X"};
  CHECK(average_set_size(singles) == 1.0);
  CHECK_THROWS(empirical_coverage(sets, std::vector<std::string>{"A"}));
}

TEST_CASE("coverage guarantee on exchangeable synthetic scores") {
  const std::vector<double> alphas{0.2, 0.1, 0.05};
  std::vector<double> mean_cov(alphas.size(), 0.0);
  const int trials = 20;
  for (int seed = 0; seed < trials; ++seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](std::size_t n) {
      std::vector<MatchResult> rs;
      std::vector<std::string> truth;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<std::string, double>> s;
        const std::size_t true_class = i % 8;
        for (std::size_t c = 0; c < 8; ++c) {
          const double p = c == true_class ? std::sqrt(u(gen)) : 0.8 * u(gen);
          s.push_back({"c" + std::to_string(c), p});
        }
        rs.push_back(result(s));
        truth.push_back("c" + std::to_string(true_class));
      }
      return std::pair{rs, truth};
    };
    auto [cal_rs, cal_truth] = draw(500);
    auto [test_rs, test_truth] = draw(500);
    double prev_size = 0.0;
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      auto cal = calibrate(cal_rs, cal_truth, alphas[a]);
      std::vector<PredictionSet> sets;
      for (const auto& r : test_rs) sets.push_back(predict_set(r, cal));
      mean_cov[a] += empirical_coverage(sets, test_truth) / trials;
      const double size = average_set_size(sets);
      CHECK(size >= prev_size);
      prev_size = size;
    }
  }
  for (std::size_t a = 0; a < alphas.size(); ++a) CHECK(mean_cov[a] >= 1.0 - alphas[a] - 0.03);
}
