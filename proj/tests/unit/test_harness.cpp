// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "ramanmatch/harness.hpp"

using namespace ramanmatch;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.arch.conv_block_channels = {2, 3};
  c.arch.conv_kernel = 3;
  c.arch.xception_channels = {4, 4};
  c.arch.depthwise_kernel = 3;
  c.arch.input_length = 32;
  c.train.total_steps = 4;
  c.train.batch_size = 8;
  c.train.validation_every = 2;
  c.train.validation_pairs = 8;
  c.train.ensemble_size = 2;
  c.train.lr0 = 1e-3;
  c.n_test_splits = 2;
  c.conformal_alpha = 0.5;
  c.alpha_grid = {0.5, 0.34};
  c.seed = 11;
  return c;
}

SyntheticDatasetSpec tiny_spec() {
  SyntheticDatasetSpec s;
  s.n_classes = 3;
  s.spectra_per_class = 4;
  s.min_peaks = 1;
  s.max_peaks = 2;
  s.grid = {400.0, 1800.0, 32};
  s.rng_seed = 5;
  return s;
}

MatchResult scored(std::vector<std::pair<std::string, double>> s) {
  MatchResult r;
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [label, p] : s) r.ranked.push_back({label, p});
  r.predicted = r.ranked.front().label;
  return r;
}

}  // namespace

TEST_CASE("noise-free synthetic spectra equal their class templates") {
  SyntheticDatasetSpec s;
  s.noise_sigma = 0.0;
  s.spectra_per_class = 1;
  s.rng_seed = 3;
  const auto data = generate_synthetic(s);
  const auto peaks = synthetic_peaks(s);
  const auto points = s.grid.points();
  REQUIRE(data.size() == s.n_classes);
  for (std::size_t c = 0; c < s.n_classes; ++c) {
    CHECK(data[c].intensities == render_peaks(peaks[c], points));
    CHECK(data[c].wavenumbers == points);
    CHECK_NOTHROW(validate(data[c]));
  }
}

TEST_CASE("synthetic peaks are separated across all classes and lie inside the grid") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticDatasetSpec s;
    s.rng_seed = seed;
    std::vector<double> centres;
    for (const auto& cls : synthetic_peaks(s)) {
      CHECK(cls.size() >= s.min_peaks);
      CHECK(cls.size() <= s.max_peaks);
      for (const auto& p : cls) {
        CHECK(p.position > s.grid.min);
        CHECK(p.position < s.grid.max);
        CHECK(p.width >= s.min_peak_width);
        CHECK(p.width <= s.max_peak_width);
        centres.push_back(p.position);
      }
    }
    std::sort(centres.begin(), centres.end());
    for (std::size_t i = 1; i < centres.size(); ++i)
      CHECK(centres[i] - centres[i - 1] >= s.min_peak_separation - 1e-9);
  }
}

TEST_CASE("synthetic generation is deterministic per seed") {
  SyntheticDatasetSpec s;
  auto a = generate_synthetic(s);
  auto b = generate_synthetic(s);
  s.rng_seed = 1;
  auto c = generate_synthetic(s);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].intensities == b[i].intensities);
  CHECK(a[0].intensities != c[0].intensities);
  CHECK(a[7].class_label == "c01");
  CHECK(a[7].source_id == "c01-2");
}

TEST_CASE("synthetic spec validation") {
  SyntheticDatasetSpec s;
  s.n_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(s), std::invalid_argument);
  s = {};
  s.grid = {0.0, 100.0, 16};
  CHECK_THROWS_AS(generate_synthetic(s), std::invalid_argument);
  s = {};
  s.max_peaks = 2;
  CHECK_THROWS_AS(generate_synthetic(s), std::invalid_argument);
}

TEST_CASE("1NN cosine separates the default synthetic classes") {
  SyntheticDatasetSpec s;
  s.spectra_per_class = 20;
  s.noise_sigma = 0.05;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    s.rng_seed = seed;
    const auto data = generate_synthetic(s);
    const auto split = make_test_split(data, seed);
    ReferenceLibrary lib(prepare(split.train, s.grid, true));
    const auto acc = baseline_accuracy(prepare(split.test, s.grid, true), lib, Metric::cosine);
    CHECK(acc.n == 10);
    CHECK(acc.top1 >= 0.8);
    total += acc.top1;
  }
  CHECK(total / 5 >= 0.8);
}

TEST_CASE("confidence interval half-width") {
  const std::vector<double> acc{0.90, 0.92, 0.94, 0.92};
  const auto ci = confidence_interval(acc);
  CHECK(ci.mean == doctest::Approx(0.92).epsilon(1e-14));
  // sample variance (0.02^2 + 0 + 0.02^2 + 0) / 3
  const double sd = std::sqrt(0.0008 / 3.0);
  REQUIRE(ci.half_width);
  CHECK(std::abs(*ci.half_width - 1.96 * sd / 2.0) < 1e-12);

  const std::vector<double> one{0.7};
  const auto single = confidence_interval(one);
  CHECK(single.mean == 0.7);
  CHECK_FALSE(single.half_width);
  CHECK_THROWS(confidence_interval(std::vector<double>{}));
}

TEST_CASE("coverage and size curve") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u;
  auto draw = [&](std::size_t n) {
    std::vector<MatchResult> rs;
    std::vector<std::string> truth;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<std::string, double>> s;
      for (int c = 0; c < 6; ++c)
        s.push_back({"k" + std::to_string(c), c == int(i % 6) ? std::sqrt(u(gen)) : 0.7 * u(gen)});
      rs.push_back(scored(s));
      truth.push_back("k" + std::to_string(i % 6));
    }
    return std::pair{rs, truth};
  };
  auto [cal, cal_truth] = draw(300);
  auto [test, test_truth] = draw(300);

  const std::vector<double> alphas{0.999, 0.5, 0.2, 0.1, 0.05, 0.01};
  const auto rows = coverage_size_curve(cal, cal_truth, test, test_truth, alphas);
  REQUIRE(rows.size() == alphas.size());
  CHECK(rows[0].average_set_size == doctest::Approx(1.0).epsilon(0.02));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].alpha == alphas[i]);
    CHECK(rows[i].theoretical_coverage == doctest::Approx(1.0 - alphas[i]));
    if (i > 0) {
      CHECK(rows[i].average_set_size >= rows[i - 1].average_set_size);
      CHECK(rows[i].empirical_coverage >= rows[i - 1].empirical_coverage);
      CHECK(rows[i].tau <= rows[i - 1].tau);
    }
  }
}

TEST_CASE("experiment reports are reproducible") {
  const auto cfg = tiny_experiment();
  const auto data = generate_synthetic(tiny_spec());
  const auto a = run_experiment(cfg, data, "seed = 11\n");
  const auto b = run_experiment(cfg, data, "seed = 11\n");
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_records() == b.to_records());
  REQUIRE(a.splits.size() == 2);
  CHECK(a.splits[0].split_seed != a.splits[1].split_seed);
  for (const auto& s : a.splits) {
    CHECK(s.n_test == 3);
    CHECK(s.n_validation == 3);
    CHECK(s.n_train == 6);
    CHECK(s.n_train_augmented == 30);
    CHECK(s.members.size() == 2);
    REQUIRE(s.methods.size() == 4);
    CHECK(s.methods[0].method == "siamese");
    CHECK(s.methods[3].method == "1nn-cosine");
    CHECK(s.match_records.size() == 3);
    REQUIRE(s.conformal);
    CHECK(s.curve.size() == 2);
  }
  CHECK(a.top1("siamese").half_width.has_value());
  CHECK(a.to_text().find("== config ==\nseed = 11\n") != std::string::npos);

  auto threaded = run_experiment(cfg, data, "seed = 11\n", RunOptions{3, {}});
  CHECK(threaded.to_text() == a.to_text());

  auto other = cfg;
  other.seed = 12;
  CHECK(run_experiment(other, data, "seed = 12\n").to_records() != a.to_records());
}

TEST_CASE("single split reports no interval") {
  auto cfg = tiny_experiment();
  cfg.n_test_splits = 1;
  cfg.conformal_alpha.reset();
  const auto rep = run_experiment(cfg, generate_synthetic(tiny_spec()));
  CHECK(rep.splits.size() == 1);
  CHECK_FALSE(rep.top1("1nn-euclidean").half_width);
  CHECK(rep.to_text().find("+/- n/a") != std::string::npos);
  CHECK(rep.to_records().find("\"top1_ci_half_width\":null") != std::string::npos);
  CHECK_FALSE(rep.splits[0].conformal);
}

TEST_CASE("fixed test records bypass leave-one-out") {
  auto cfg = tiny_experiment();
  auto data = generate_synthetic(tiny_spec());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (i % 4 == 3) data[i].role = Role::test;
    if (i % 4 == 2) data[i].role = Role::validation;
  }
  const auto rep = run_experiment(cfg, data);
  REQUIRE(rep.splits.size() == 1);
  CHECK(rep.splits[0].n_test == 3);
  CHECK(rep.splits[0].n_validation == 3);
  CHECK(rep.splits[0].n_train == 6);

  for (auto& s : data)
    if (s.class_label == "c02" && s.role != Role::test) s.role = Role::validation;
  try {
    run_experiment(cfg, data);
    FAIL("expected an ExperimentError");
  } catch (const ExperimentError& e) {
    CHECK(std::string(e.what()).find("split seed") != std::string::npos);
    CHECK(std::string(e.what()).find("c02") != std::string::npos);
    CHECK(e.split_seed() == rep.splits[0].split_seed);
  }
}

TEST_CASE("experiment config validation") {
  auto cfg = tiny_experiment();
  cfg.n_test_splits = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_experiment();
  cfg.grid = Grid{0, 1, 64};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_experiment();
  cfg.conformal_alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
