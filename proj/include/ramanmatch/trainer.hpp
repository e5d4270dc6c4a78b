// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ramanmatch/augment.hpp"
#include "ramanmatch/network.hpp"

namespace ramanmatch {

struct TrainConfig {
  double beta = 1.0;         // positive : negative pairs per batch
  double lambda = 1e-3;      // L2 weight on conv / linear weights
  double lr0 = 5e-5;
  std::size_t total_steps = 2000;
  std::size_t batch_size = 64;
  std::size_t ensemble_size = 5;
  std::uint64_t rng_seed = 0;
  std::size_t validation_every = 200;
  std::size_t validation_pairs = 128;

  void validate() const;
};

struct PairBatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> labels;
  double beta = 1.0;

  std::size_t size() const { return pairs.size(); }
  std::size_t positives() const;
};

/// Spectrum indices per class label.
using ClassIndex = std::map<std::string, std::vector<std::size_t>, std::less<>>;

ClassIndex index_by_class(const std::vector<ResampledSpectrum>& spectra);

/// round(n * beta / (1 + beta)).
std::size_t positive_count(std::size_t n, double beta);

/// Positives: a class with at least two spectra chosen uniformly, then two
/// distinct members. Negatives: two distinct classes chosen uniformly, then
/// one member of each. Positives come first.
PairBatch sample_pair_batch(const ClassIndex& classes, double beta,
                            std::size_t n, nd::Rng& rng);

struct PairCounts {
  std::uint64_t positive = 0;
  std::uint64_t negative = 0;
  double ratio() const { return double(positive) / double(negative); }
};

/// Unordered pairs of distinct spectra for the given class sizes.
PairCounts count_pairs(std::span<const std::size_t> class_sizes);

/// (M - 1) / (M (N - 1)) for N classes of M spectra each.
double approximate_pair_ratio(std::size_t n_classes, std::size_t per_class);

/// Mean binary cross-entropy of `p` against `labels` plus lambda times the
/// sum of squares of every regularized weight bound through `binding`.
nd::Var training_loss(ParameterBinding& binding, const nd::ParameterSet& params,
                      nd::Var p, std::span<const double> labels, double lambda);

/// lr0 * (1 + cos(pi * step / total)) / 2, clamped to step in [0, total].
double cosine_lr(std::size_t step, std::size_t total, double lr0);

class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(const nd::ParameterSet& params) : Adam(params, Options{}) {}
  Adam(const nd::ParameterSet& params, Options options);

  /// Applies one bias-corrected update from the gradients held in `params`.
  void step(nd::ParameterSet& params, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Moments {
    nd::Tensor m, v;
  };
  Options opt_;
  std::size_t t_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

struct LogRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_loss;
};

/// One JSON object per line: step, lr, loss, and validation fields when set.
std::string to_json_line(const LogRecord& r);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingData {
  std::vector<ResampledSpectrum> train;
  /// Spectra the shift-simulated validation pairs are drawn from.
  std::vector<ResampledSpectrum> validation;
  double grid_step = 1.0;  // cm^-1 per index
  ShiftSimConfig shift;
};

struct MemberResult {
  nd::ParameterSet params;  // best validation checkpoint
  std::vector<LogRecord> log;
  std::uint64_t seed = 0;
  std::size_t best_step = 0;
  double best_val_accuracy = 0.0;
};

using ProgressFn = std::function<void(const LogRecord&)>;

/// Deterministic given `seed`: initialization, dropout, pair sampling and
/// validation pairs each draw from their own stream.
MemberResult train_member(const TrainingData& data, const ArchitectureConfig& arch,
                          const TrainConfig& cfg, std::uint64_t seed,
                          const ProgressFn& progress = {});

struct Ensemble {
  ArchitectureConfig arch;
  std::vector<nd::ParameterSet> members;
  std::vector<std::uint64_t> member_seeds;

  std::size_t size() const { return members.size(); }
};

/// Pairwise distinct seeds derived from `base`.
std::vector<std::uint64_t> member_seeds(std::uint64_t base, std::size_t count);

struct EnsembleResult {
  Ensemble ensemble;
  std::vector<MemberResult> members;  // logs and best steps; params moved out
};

/// Trains cfg.ensemble_size members, up to `threads` at a time.
EnsembleResult train_ensemble(const TrainingData& data,
                              const ArchitectureConfig& arch,
                              const TrainConfig& cfg, std::size_t threads = 1);

/// Fraction of pairs where (p >= 0.5) matches the label, and their mean
/// cross-entropy, under eval mode.
std::pair<double, double> pair_accuracy(const SiameseNetwork& net,
                                        const nd::ParameterSet& params,
                                        const SimulatedPairs& pairs);

}  // namespace ramanmatch
