// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "ramanmatch/hash.hpp"

namespace ramanmatch {

using nd::Mode;
using nd::Tensor;
using nd::Var;

namespace {

enum Stream : std::uint64_t { init_stream = 1, dropout_stream, sample_stream, validation_stream };

std::string num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<const ResampledSpectrum*> pointers(const std::vector<ResampledSpectrum>& v,
                                               std::size_t from, std::size_t to) {
  std::vector<const ResampledSpectrum*> out;
  for (std::size_t i = from; i < to; ++i) out.push_back(&v[i]);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train: " + m); };
  if (!(beta > 0.0)) fail("beta must be positive");
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (total_steps == 0) fail("total_steps must be positive");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (ensemble_size == 0) fail("ensemble_size must be at least 1");
  if (validation_every == 0) fail("validation_every must be positive");
  if (validation_pairs < 2) fail("validation_pairs must be at least 2");
}

std::size_t PairBatch::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1.0));
}

ClassIndex index_by_class(const std::vector<ResampledSpectrum>& spectra) {
  ClassIndex out;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    out[spectra[i].class_label].push_back(i);
  }
  return out;
}

std::size_t positive_count(std::size_t n, double beta) {
  return static_cast<std::size_t>(std::llround(double(n) * beta / (1.0 + beta)));
}

PairBatch sample_pair_batch(const ClassIndex& classes, double beta, std::size_t n,
                            nd::Rng& rng) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  std::vector<const std::vector<std::size_t>*> all, multi;
  for (const auto& [label, members] : classes) {
    if (members.empty()) continue;
    all.push_back(&members);
    if (members.size() >= 2) multi.push_back(&members);
  }
  const std::size_t n_pos = positive_count(n, beta);
  if (n_pos > 0 && multi.empty()) {
    throw std::invalid_argument("positive pairs need a class with at least two spectra");
  }
  if (n_pos < n && all.size() < 2) {
    throw std::invalid_argument("negative pairs need at least two classes");
  }

  PairBatch batch;
  batch.beta = beta;
  batch.pairs.reserve(n);
  batch.labels.reserve(n);
  auto member = [&rng](const std::vector<std::size_t>& m) {
    return m[std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(rng)];
  };
  for (std::size_t i = 0; i < n_pos; ++i) {
    const auto& m = *multi[std::uniform_int_distribution<std::size_t>(0, multi.size() - 1)(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    batch.pairs.emplace_back(m[a], m[b]);
    batch.labels.push_back(1.0);
  }
  std::uniform_int_distribution<std::size_t> pick_class(0, all.size() - 1);
  for (std::size_t i = n_pos; i < n; ++i) {
    const std::size_t ca = pick_class(rng);
    std::size_t cb = pick_class(rng);
    while (cb == ca) cb = pick_class(rng);
    batch.pairs.emplace_back(member(*all[ca]), member(*all[cb]));
    batch.labels.push_back(0.0);
  }
  return batch;
}

PairCounts count_pairs(std::span<const std::size_t> class_sizes) {
  PairCounts c;
  std::uint64_t seen = 0;
  for (std::size_t m : class_sizes) {
    c.positive += std::uint64_t(m) * (m - (m > 0 ? 1 : 0)) / 2;
    c.negative += seen * m;
    seen += m;
  }
  return c;
}

double approximate_pair_ratio(std::size_t n_classes, std::size_t per_class) {
  return double(per_class - 1) / (double(per_class) * double(n_classes - 1));
}

Var training_loss(ParameterBinding& binding, const nd::ParameterSet& params, Var p,
                  std::span<const double> labels, double lambda) {
  Var loss = nd::binary_cross_entropy(p, labels);
  if (lambda == 0.0) return loss;
  std::optional<Var> reg;
  for (const auto& [name, param] : params) {
    if (!param.regularized()) continue;
    Var sq = nd::sum_squares(binding(name));
    reg = reg ? nd::add(*reg, sq) : sq;
  }
  return reg ? nd::add(loss, nd::scale(*reg, lambda)) : loss;
}

double cosine_lr(std::size_t step, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  const double t = double(std::min(step, total)) / double(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

Adam::Adam(const nd::ParameterSet& params, Options options) : opt_(options) {
  for (const auto& [name, p] : params) {
    if (!p.trainable()) continue;
    const Tensor& v = p.value;
    state_.emplace(name, Moments{Tensor(v.batch(), v.channels(), v.width()),
                                 Tensor(v.batch(), v.channels(), v.width())});
  }
}

void Adam::step(nd::ParameterSet& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
  for (auto& [name, mom] : state_) {
    nd::Parameter& p = params.at(name);
    auto value = p.value.values();
    auto grad = p.grad.values();
    auto m = mom.m.values();
    auto v = mom.v.values();
    if (grad.size() != value.size()) {
      throw std::logic_error("adam: gradient of '" + name + "' has the wrong size");
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * grad[i];
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
  }
}

std::string to_json_line(const LogRecord& r) {
  std::string s = "{\"step\":" + std::to_string(r.step) + ",\"lr\":" + num(r.lr) +
                  ",\"loss\":" + num(r.loss);
  if (r.val_accuracy) s += ",\"val_accuracy\":" + num(*r.val_accuracy);
  if (r.val_loss) s += ",\"val_loss\":" + num(*r.val_loss);
  return s + "}";
}

std::pair<double, double> pair_accuracy(const SiameseNetwork& net,
                                        const nd::ParameterSet& params,
                                        const SimulatedPairs& pairs) {
  if (pairs.size() == 0) throw std::invalid_argument("no validation pairs");
  constexpr std::size_t chunk = 64;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t from = 0; from < pairs.size(); from += chunk) {
    const std::size_t to = std::min(from + chunk, pairs.size());
    auto pa = pointers(pairs.first, from, to);
    auto pb = pointers(pairs.second, from, to);
    auto scores = net.siamese_scores(params, to_batch(pa), to_batch(pb));
    for (std::size_t i = from; i < to; ++i) {
      const double p = std::clamp(scores[i - from].p, 1e-12, 1.0 - 1e-12);
      const bool same = pairs.labels[i] == 1.0;
      if ((p >= 0.5) == same) ++correct;
      loss -= same ? std::log(p) : std::log(1.0 - p);
    }
  }
  return {double(correct) / double(pairs.size()), loss / double(pairs.size())};
}

MemberResult train_member(const TrainingData& data, const ArchitectureConfig& arch,
                          const TrainConfig& cfg, std::uint64_t seed,
                          const ProgressFn& progress) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("no training spectra");
  for (const auto& s : data.train) {
    if (s.intensities.size() != arch.input_length) {
      throw std::invalid_argument("training spectrum '" + s.source_id + "' has length " +
                                  std::to_string(s.intensities.size()) + ", expected " +
                                  std::to_string(arch.input_length));
    }
  }
  const auto& val_source = data.validation.empty() ? data.train : data.validation;

  SiameseNetwork net(arch);
  MemberResult result;
  result.seed = seed;
  nd::ParameterSet params = net.init_parameters(mix_seed(seed, init_stream));
  nd::Rng dropout_rng(mix_seed(seed, dropout_stream));
  nd::Rng sample_rng(mix_seed(seed, sample_stream));
  nd::Rng validation_rng(mix_seed(seed, validation_stream));
  const ClassIndex classes = index_by_class(data.train);
  Adam adam(params);

  bool have_best = false;
  double best_loss = 0.0;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const double lr = cosine_lr(step, cfg.total_steps, cfg.lr0);
    const PairBatch batch = sample_pair_batch(classes, cfg.beta, cfg.batch_size, sample_rng);

    // Each distinct spectrum goes through the representation net once.
    std::vector<std::size_t> unique;
    for (const auto& [a, b] : batch.pairs) {
      unique.push_back(a);
      unique.push_back(b);
    }
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    auto slot = [&unique](std::size_t idx) {
      return std::size_t(std::lower_bound(unique.begin(), unique.end(), idx) - unique.begin());
    };
    std::vector<std::size_t> ia, ib;
    for (const auto& [a, b] : batch.pairs) {
      ia.push_back(slot(a));
      ib.push_back(slot(b));
    }
    std::vector<const ResampledSpectrum*> inputs;
    for (std::size_t idx : unique) inputs.push_back(&data.train[idx]);

    nd::Tape tape;
    ParameterBinding bind(tape, params);
    Var feats = net.represent(bind, tape.constant(to_batch(inputs)), Mode::train,
                              &dropout_rng);
    Var logits = net.similarity_logit(
        bind, distance_maps(nd::gather_batch(feats, ia), nd::gather_batch(feats, ib)));
    Var loss = training_loss(bind, params, nd::sigmoid(logits), batch.labels, cfg.lambda);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      std::set<std::string> labels;
      for (const auto& [a, b] : batch.pairs) {
        labels.insert(data.train[a].class_label);
        labels.insert(data.train[b].class_label);
      }
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (seed " << seed << ", lr " << lr
          << ", batch of " << batch.size() << " pairs: " << batch.positives()
          << " positive, " << batch.size() - batch.positives() << " negative, "
          << labels.size() << " classes)";
      throw TrainingError(msg.str());
    }
    params.zero_grad();
    tape.backward(loss);
    adam.step(params, lr);

    LogRecord rec{step, lr, loss_value, std::nullopt, std::nullopt};
    const bool last = step + 1 == cfg.total_steps;
    if ((step + 1) % cfg.validation_every == 0 || last) {
      const auto pairs = simulate_validation_pairs(val_source, data.grid_step, data.shift,
                                                   cfg.validation_pairs, validation_rng);
      const auto [acc, vloss] = pair_accuracy(net, params, pairs);
      rec.val_accuracy = acc;
      rec.val_loss = vloss;
      if (!have_best || acc > result.best_val_accuracy ||
          (acc == result.best_val_accuracy && vloss <= best_loss)) {
        have_best = true;
        result.best_val_accuracy = acc;
        best_loss = vloss;
        result.best_step = step;
        result.params = params;
      }
    }
    result.log.push_back(rec);
    if (progress) progress(rec);
  }
  for (auto& [name, p] : result.params) p.grad.fill(0.0);
  return result;
}

std::vector<std::uint64_t> member_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 0; out.size() < count; ++stream) {
    const std::uint64_t s = mix_seed(base, 1000 + stream);
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

EnsembleResult train_ensemble(const TrainingData& data, const ArchitectureConfig& arch,
                              const TrainConfig& cfg, std::size_t threads) {
  cfg.validate();
  const auto seeds = member_seeds(cfg.rng_seed, cfg.ensemble_size);
  std::vector<std::optional<MemberResult>> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        results[i] = train_member(data, arch, cfg, seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, seeds.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw TrainingError("ensemble member with seed " + std::to_string(seeds[i]) +
                          ": " + e.what());
    }
  }

  EnsembleResult out;
  out.ensemble.arch = arch;
  out.ensemble.member_seeds = seeds;
  for (auto& r : results) {
    out.ensemble.members.push_back(std::move(r->params));
    r->params = nd::ParameterSet{};
    out.members.push_back(std::move(*r));
  }
  return out;
}

}  // namespace ramanmatch
