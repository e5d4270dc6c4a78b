// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ramanmatch/augment.hpp"

using namespace ramanmatch;

namespace {

ResampledSpectrum spec(std::vector<double> v, std::string label = "a",
                       std::string id = "s") {
  return {std::move(v), std::move(label), std::move(id), false};
}

// Window variance written out from the definition: differences d[1..L-1],
// forward window [w, w+K) clipped to the differences that exist, padded to
// two samples at the ends.
std::vector<double> window_variance_oracle(const std::vector<double>& s, std::size_t K) {
  const std::size_t L = s.size();
  std::vector<double> out;
  for (std::size_t w = 0; w < L; ++w) {
    std::vector<double> win;
    for (std::size_t i = w; i < w + K && i < L; ++i)
      if (i >= 1) win.push_back(s[i] - s[i - 1]);
    std::size_t next_back = w, next_fwd = std::min(w + K, L);
    while (win.size() < 2) {
      if (next_back > 1) {
        --next_back;
        win.insert(win.begin(), s[next_back] - s[next_back - 1]);
      } else {
        win.push_back(s[next_fwd] - s[next_fwd - 1]);
        ++next_fwd;
      }
    }
    double mu = 0;
    for (double d : win) mu += d;
    mu /= double(win.size());
    double v = 0;
    for (double d : win) v += (d - mu) * (d - mu);
    out.push_back(v / double(win.size()));
  }
  return out;
}

}  // namespace

TEST_CASE("constant and ramp spectra are left unchanged by noise augmentation") {
  NoiseAugConfig cfg;
  nd::Rng rng(1);
  auto flat = spec(std::vector<double>(64, 3.25));
  CHECK(noise_augment(flat, cfg, rng).intensities == flat.intensities);
  std::vector<double> ramp(64);
  for (std::size_t w = 0; w < ramp.size(); ++w) ramp[w] = 0.37 * double(w) - 4.1;
  auto r = spec(ramp);
  for (int i = 0; i < 20; ++i) CHECK(noise_augment(r, cfg, rng).intensities == ramp);
}

TEST_CASE("window variance matches the definition") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (std::size_t K : {2u, 3u, 10u}) {
    std::vector<double> s(40);
    for (double& v : s) v = normal(rng);
    auto got = derivative_window_variance(s, K);
    auto expect = window_variance_oracle(s, K);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(derivative_window_variance(std::vector<double>(5, 0.0), 5),
                  std::invalid_argument);
}

TEST_CASE("step spectrum concentrates noise at the step") {
  const std::vector<double> step{0, 0, 0, 1, 1, 1};
  auto var = window_variance_oracle(step, 2);
  CHECK(var == std::vector<double>{0, 0, 0.25, 0.25, 0, 0});

  NoiseAugConfig cfg;
  cfg.K = 2;
  nd::Rng rng(77);
  const int draws = 10000;
  std::vector<double> sum(6, 0.0), sumsq(6, 0.0);
  for (int i = 0; i < draws; ++i) {
    auto out = noise_augment(spec(step), cfg, rng).intensities;
    for (std::size_t w = 0; w < 6; ++w) {
      const double e = out[w] - step[w];
      sum[w] += e;
      sumsq[w] += e * e;
    }
  }
  for (std::size_t w = 0; w < 6; ++w) {
    const double mean = sum[w] / draws;
    const double v = sumsq[w] / draws - mean * mean;
    const double expect = cfg.kappa * var[w];
    if (expect == 0.0) {
      CHECK(v == 0.0);
    } else {
      CHECK(std::abs(v - expect) <= 0.1 * expect);
    }
  }
}

TEST_CASE("averaged noise copies recover the original") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> normal;
  std::vector<double> s(48);
  for (double& v : s) v = normal(gen);
  NoiseAugConfig cfg;
  const auto var = derivative_window_variance(s, cfg.K);
  nd::Rng rng(2);
  const int n = 10000;
  std::vector<double> mean(s.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    auto out = noise_augment(spec(s), cfg, rng).intensities;
    for (std::size_t w = 0; w < s.size(); ++w) mean[w] += out[w] / n;
  }
  for (std::size_t w = 0; w < s.size(); ++w) {
    const double se = std::sqrt(cfg.kappa * var[w] / n);
    CHECK(std::abs(mean[w] - s[w]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("classes above 100 spectra are not augmented") {
  std::vector<ResampledSpectrum> big;
  for (int i = 0; i < 150; ++i) big.push_back(spec({double(i), 1.0}, "x", std::to_string(i)));
  nd::Rng rng(0);
  auto out = augment_class(big, 150, NoiseAugConfig{}, rng);
  REQUIRE(out.size() == 150);
  for (std::size_t i = 0; i < 150; ++i) CHECK(out[i].intensities == big[i].intensities);
  CHECK(augment_class(big, 400, NoiseAugConfig{}, rng).size() == 150);
  CHECK(augment_target(150, NoiseAugConfig{}) == 150);
  CHECK(augment_target(3, NoiseAugConfig{}) == 10);
  CHECK(augment_target(30, NoiseAugConfig{}) == 30);
}

TEST_CASE("convex combinations stay inside the parents' envelope") {
  std::vector<ResampledSpectrum> two = {spec({0, 5, -1, 2}, "q", "p0"),
                                        spec({3, 1, 4, 2}, "q", "p1")};
  const auto before = two;
  nd::Rng rng(9);
  auto out = augment_class(two, 5, NoiseAugConfig{}, rng);
  REQUIRE(out.size() == 5);
  CHECK(out[0].intensities == before[0].intensities);
  CHECK(out[1].intensities == before[1].intensities);
  CHECK(two[0].intensities == before[0].intensities);
  for (std::size_t k = 2; k < 5; ++k) {
    CHECK(out[k].class_label == "q");
    for (std::size_t i = 0; i < 4; ++i) {
      const double lo = std::min(two[0].intensities[i], two[1].intensities[i]);
      const double hi = std::max(two[0].intensities[i], two[1].intensities[i]);
      CHECK(out[k].intensities[i] >= lo);
      CHECK(out[k].intensities[i] <= hi);
    }
  }
}

TEST_CASE("single spectrum is augmented with noise copies") {
  std::vector<double> s(32);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(0.5 * double(i));
  nd::Rng rng(3);
  auto out = augment_class({spec(s, "solo", "one")}, 4, NoiseAugConfig{}, rng);
  REQUIRE(out.size() == 4);
  CHECK(out[0].intensities == s);
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK(out[k].class_label == "solo");
    CHECK(out[k].intensities != s);
  }
}

TEST_CASE("augmentation errors and determinism") {
  nd::Rng rng(0);
  std::vector<ResampledSpectrum> v = {spec({1, 2}, "a"), spec({2, 3}, "a"), spec({0, 1}, "a")};
  CHECK_THROWS_AS(augment_class(v, 2, NoiseAugConfig{}, rng), std::invalid_argument);
  CHECK_THROWS_AS(augment_class({}, 2, NoiseAugConfig{}, rng), std::invalid_argument);
  v.push_back(spec({0, 1}, "b"));
  CHECK_THROWS_AS(augment_class(v, 5, NoiseAugConfig{}, rng), std::invalid_argument);

  std::vector<ResampledSpectrum> data;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i <= c; ++i) {
      std::vector<double> x(16);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::cos(double(c + 1) * double(j) + i);
      data.push_back(spec(x, "c" + std::to_string(c), std::to_string(c) + "_" + std::to_string(i)));
    }
  NoiseAugConfig cfg;
  cfg.rng_seed = 5;
  auto a = augment_dataset(data, cfg);
  auto b = augment_dataset(data, cfg);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].intensities == b[i].intensities);
  cfg.rng_seed = 6;
  auto c = augment_dataset(data, cfg);
  CHECK(c[1].intensities != a[1].intensities);
}

TEST_CASE("shifting by one grid step moves intensities by one index") {
  const std::vector<double> s{1, 2, 3, 4, 5};
  CHECK(shift_intensities(s, 1) == std::vector<double>{1, 1, 2, 3, 4});
  CHECK(shift_intensities(s, -1) == std::vector<double>{2, 3, 4, 5, 5});
  CHECK(shift_intensities(s, 0) == s);
  CHECK(shift_intensities(s, 9) == std::vector<double>(5, 1.0));
  CHECK(shift_to_steps(3.0, 1.5) == 2);
  CHECK(shift_to_steps(-3.0, 2.0) == -2);
  CHECK(shift_to_steps(2.9, 2.0) == 1);
}

TEST_CASE("negative shift draws follow the configured normal") {
  ShiftSimConfig cfg;
  nd::Rng rng(31);
  const int n = 10000;
  double sum = 0, sumsq = 0, lowest = 1e9;
  for (int i = 0; i < n; ++i) {
    const double v = draw_negative_shift(cfg, rng);
    sum += v;
    sumsq += v * v;
    lowest = std::min(lowest, v);
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean - 150.0) <= 5.0);
  CHECK(std::abs(sd - 50.0) <= 5.0);
  CHECK(lowest >= 9.0);
}

TEST_CASE("simulated validation pairs") {
  std::vector<ResampledSpectrum> v;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(64);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::exp(-0.05 * std::pow(double(j) - 20.0 * c - 10.0, 2));
    v.push_back(spec(x, "c" + std::to_string(c)));
  }
  ShiftSimConfig cfg;
  cfg.positive_shift = 0.0;
  nd::Rng rng(4);
  auto pairs = simulate_validation_pairs(v, 2.0, cfg, 10, rng);
  REQUIRE(pairs.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(pairs.labels[i] == (i % 2 == 0 ? 1.0 : 0.0));
    if (i % 2 == 0) CHECK(pairs.first[i].intensities == pairs.second[i].intensities);
    else CHECK(pairs.first[i].intensities != pairs.second[i].intensities);
    CHECK(pairs.first[i].class_label == pairs.second[i].class_label);
  }
  nd::Rng again(4);
  auto repeat = simulate_validation_pairs(v, 2.0, cfg, 10, again);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(repeat.second[i].intensities == pairs.second[i].intensities);
  ShiftSimConfig bad;
  bad.positive_shift = 12.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
