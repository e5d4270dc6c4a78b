// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "ramanmatch/hash.hpp"
#include "ramanmatch/trainer.hpp"

using namespace ramanmatch;
using nd::Tensor;

namespace {

ArchitectureConfig tiny_arch() {
  ArchitectureConfig a;
  a.conv_block_channels = {2, 3};
  a.conv_kernel = 3;
  a.pool_window = 4;
  a.xception_channels = {4, 4};
  a.depthwise_kernel = 3;
  a.input_length = 32;
  return a;
}

TrainingData tiny_data(std::size_t classes = 3, std::size_t per_class = 3) {
  TrainingData d;
  d.grid_step = 4.0;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      ResampledSpectrum s;
      s.class_label = "k" + std::to_string(c);
      s.source_id = s.class_label + "_" + std::to_string(i);
      for (std::size_t w = 0; w < 32; ++w) {
        const double x = double(w) - 6.0 - 8.0 * double(c);
        s.intensities.push_back(std::exp(-0.1 * x * x) + 0.01 * double(i));
      }
      d.train.push_back(s);
    }
  return d;
}

TrainConfig quick_cfg(std::size_t steps = 6) {
  TrainConfig c;
  c.total_steps = steps;
  c.batch_size = 8;
  c.validation_every = 3;
  c.validation_pairs = 8;
  c.ensemble_size = 2;
  return c;
}

}  // namespace

TEST_CASE("positive share of a batch follows beta") {
  CHECK(positive_count(10, 1.0) == 5);
  CHECK(positive_count(12, 0.5) == 4);
  CHECK(positive_count(64, 1.0) == 32);

  ClassIndex idx{{"a", {0, 1, 2}}, {"b", {3, 4}}, {"c", {5}}};
  nd::Rng rng(1);
  auto b = sample_pair_batch(idx, 1.0, 10, rng);
  CHECK(b.size() == 10);
  CHECK(b.positives() == 5);
  auto h = sample_pair_batch(idx, 0.5, 12, rng);
  CHECK(h.positives() == 4);
}

TEST_CASE("pair sampler invariants") {
  ClassIndex idx{{"a", {0, 1, 2}}, {"b", {3, 4}}, {"c", {5}}, {"d", {6, 7, 8, 9}}};
  std::vector<std::string> label_of(10);
  for (const auto& [label, members] : idx)
    for (auto m : members) label_of[m] = label;
  nd::Rng rng(42);
  std::set<std::string> negative_classes;
  for (int trial = 0; trial < 200; ++trial) {
    const double beta = trial % 2 ? 1.0 : 0.25;
    auto b = sample_pair_batch(idx, beta, 16, rng);
    REQUIRE(b.labels.size() == b.pairs.size());
    CHECK(b.positives() == positive_count(16, beta));
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto [x, y] = b.pairs[i];
      CHECK(x != y);
      if (b.labels[i] == 1.0) {
        CHECK(label_of[x] == label_of[y]);
        CHECK(label_of[x] != "c");
      } else {
        CHECK(label_of[x] != label_of[y]);
        negative_classes.insert(label_of[x]);
      }
    }
  }
  CHECK(negative_classes.size() == 4);
}

TEST_CASE("pair sampler preconditions") {
  nd::Rng rng(0);
  CHECK_THROWS_AS(sample_pair_batch({{"a", {0, 1}}}, 1.0, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_pair_batch({{"a", {0}}, {"b", {1}}}, 1.0, 4, rng),
                  std::invalid_argument);
  CHECK_NOTHROW(sample_pair_batch({{"a", {0, 1}}}, 1e9, 4, rng));
}

TEST_CASE("pair counts match exhaustive enumeration") {
  for (std::size_t n = 2; n <= 5; ++n) {
    for (std::size_t m = 2; m <= 5; ++m) {
      std::vector<std::size_t> label;
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < m; ++i) label.push_back(c);
      std::uint64_t pos = 0, neg = 0;
      for (std::size_t i = 0; i < label.size(); ++i)
        for (std::size_t j = i + 1; j < label.size(); ++j) (label[i] == label[j] ? pos : neg)++;
      std::vector<std::size_t> sizes(n, m);
      auto c = count_pairs(sizes);
      CHECK(c.positive == pos);
      CHECK(c.negative == neg);
    }
  }
  std::vector<std::size_t> sizes{2, 2, 2};
  auto c = count_pairs(sizes);
  CHECK(c.positive == 3);
  CHECK(c.negative == 12);
  CHECK(c.ratio() == doctest::Approx(0.25));
  CHECK(approximate_pair_ratio(3, 2) == doctest::Approx(0.25));
  std::vector<std::size_t> uneven{1, 4, 0};
  CHECK(count_pairs(uneven).positive == 6);
  CHECK(count_pairs(uneven).negative == 4);
}

TEST_CASE("loss: cross-entropy plus weight penalty") {
  nd::ParameterSet ps;
  ps.add("w", Tensor::from_values(1, 1, 4, {1, -1, 1, -1}), nd::ParamKind::weight);
  ps.add("b", Tensor::from_values(1, 1, 1, {5}), nd::ParamKind::bias);
  ps.add("g", Tensor::from_values(1, 1, 1, {3}), nd::ParamKind::norm_affine);

  nd::Tape tape;
  ParameterBinding bind(tape, ps);
  const std::vector<double> one{1.0};
  auto half = tape.constant(Tensor::from_values(1, 1, 1, {0.5}));
  CHECK(training_loss(bind, ps, half, one, 0.0).value()[0] ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-12));

  auto sure = tape.constant(Tensor::from_values(1, 1, 1, {1.0}));
  const double data_term = training_loss(bind, ps, sure, one, 0.0).value()[0];
  CHECK(data_term < 1e-11);
  const double total = training_loss(bind, ps, sure, one, 1e-3).value()[0];
  CHECK(total - data_term == doctest::Approx(0.004).epsilon(1e-12));
}

TEST_CASE("loss gradient with respect to the logit is (p - y) / N") {
  nd::ParameterSet ps;
  auto& logits = ps.add("z", Tensor::from_values(4, 1, 1, {-2.0, 0.3, 1.5, 4.0}),
                        nd::ParamKind::bias);
  const std::vector<double> y{0, 1, 1, 0};
  nd::Tape tape;
  ParameterBinding bind(tape, ps);
  auto loss = training_loss(bind, ps, nd::sigmoid(bind("z")), y, 0.0);
  ps.zero_grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.value[i]));
    CHECK(std::abs(logits.grad[i] - (p - y[i]) / 4.0) < 1e-10);
  }
}

TEST_CASE("cosine schedule") {
  const double lr0 = 5e-5;
  CHECK(cosine_lr(0, 100, lr0) == lr0);
  CHECK(cosine_lr(100, 100, lr0) == doctest::Approx(0.0));
  CHECK(std::abs(cosine_lr(100, 100, lr0)) < 1e-20);
  CHECK(cosine_lr(50, 100, lr0) == doctest::Approx(lr0 / 2).epsilon(1e-12));
  for (std::size_t t = 0; t < 100; ++t) CHECK(cosine_lr(t + 1, 100, lr0) <= cosine_lr(t, 100, lr0));
}

TEST_CASE("first Adam step moves by about lr") {
  nd::ParameterSet ps;
  auto& theta = ps.add("t", Tensor::from_values(1, 1, 1, {1.0}), nd::ParamKind::weight);
  Adam adam(ps);
  theta.grad[0] = 2.0 * theta.value[0];
  adam.step(ps, 0.01);
  CHECK(theta.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(adam.steps_taken() == 1);
  for (int i = 0; i < 2000; ++i) {
    theta.grad[0] = 2.0 * theta.value[0];
    adam.step(ps, 0.01);
  }
  CHECK(std::abs(theta.value[0]) < 0.05);
}

TEST_CASE("Adam leaves buffers alone") {
  nd::ParameterSet ps;
  auto& buf = ps.add("running", Tensor::from_values(1, 1, 1, {7.0}), nd::ParamKind::buffer);
  Adam adam(ps);
  buf.grad[0] = 1.0;
  adam.step(ps, 0.1);
  CHECK(buf.value[0] == 7.0);
}

TEST_CASE("log records serialize as JSON lines") {
  LogRecord r{12, 0.5, 0.25, std::nullopt, std::nullopt};
  CHECK(to_json_line(r) == "{\"step\":12,\"lr\":0.5,\"loss\":0.25}");
  r.val_accuracy = 0.75;
  r.val_loss = 1.5;
  CHECK(to_json_line(r) ==
        "{\"step\":12,\"lr\":0.5,\"loss\":0.25,\"val_accuracy\":0.75,\"val_loss\":1.5}");
}

TEST_CASE("member training is deterministic per seed") {
  auto data = tiny_data();
  auto arch = tiny_arch();
  auto cfg = quick_cfg();
  auto a = train_member(data, arch, cfg, 7);
  auto b = train_member(data, arch, cfg, 7);
  auto c = train_member(data, arch, cfg, 8);
  CHECK(a.params.checksum() == b.params.checksum());
  CHECK(a.params.checksum() != c.params.checksum());
  REQUIRE(a.log.size() == cfg.total_steps);
  CHECK(a.log[2].val_accuracy.has_value());
  CHECK_FALSE(a.log[0].val_accuracy.has_value());
  CHECK(a.log.back().val_accuracy.has_value());
  CHECK(a.best_val_accuracy >= 0.0);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("a heavy weight penalty shrinks the weights") {
  auto data = tiny_data();
  auto arch = tiny_arch();
  auto cfg = quick_cfg(40);
  cfg.lambda = 1e3;
  cfg.lr0 = 1e-2;
  cfg.validation_every = 40;
  const double before =
      SiameseNetwork(arch).init_parameters(mix_seed(3, 1)).weight_sum_squares();
  auto r = train_member(data, arch, cfg, 3);
  CHECK(r.params.weight_sum_squares() < before);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  auto data = tiny_data();
  data.train[0].intensities[5] = std::numeric_limits<double>::quiet_NaN();
  data.train[1].intensities[5] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = quick_cfg(3);
  try {
    train_member(data, tiny_arch(), cfg, 1);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss at step") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
    CHECK(msg.find("positive") != std::string::npos);
  }
}

TEST_CASE("ensembles use distinct seeds") {
  auto seeds = member_seeds(0, 8);
  CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 8);
  CHECK(member_seeds(0, 3) == std::vector<std::uint64_t>(seeds.begin(), seeds.begin() + 3));

  auto data = tiny_data();
  auto cfg = quick_cfg(3);
  cfg.ensemble_size = 3;
  auto serial = train_ensemble(data, tiny_arch(), cfg, 1);
  auto threaded = train_ensemble(data, tiny_arch(), cfg, 3);
  REQUIRE(serial.ensemble.size() == 3);
  CHECK(serial.ensemble.member_seeds == member_seeds(cfg.rng_seed, 3));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(serial.ensemble.members[i].checksum() == threaded.ensemble.members[i].checksum());
    CHECK(serial.members[i].log.size() == 3);
  }
  CHECK(serial.ensemble.members[0].checksum() != serial.ensemble.members[1].checksum());
}
