// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ramanmatch/conformal.hpp"
#include "ramanmatch/matcher.hpp"

namespace ramanmatch {

// ---------------------------------------------------------------------------
// Synthetic spectra

struct SyntheticDatasetSpec {
  std::size_t n_classes = 10;
  std::size_t spectra_per_class = 5;
  std::size_t min_peaks = 3;
  std::size_t max_peaks = 6;
  double min_peak_width = 6.0;  // Gaussian standard deviation, cm^-1
  double max_peak_width = 15.0;
  /// Minimum distance between any two peak centres, across all classes.
  double min_peak_separation = 10.0;
  double noise_sigma = 0.05;
  /// Linear baseline offset and tilt amplitude, in units of noise_sigma.
  double baseline_scale = 10.0;
  Grid grid{400.0, 1800.0, 128};
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Peak {
  double position = 0.0;
  double height = 0.0;
  double width = 0.0;
};

/// Peak set of every class. Centres sit on distinct slots of width
/// 2 * min_peak_separation with jitter, so peaks never coincide.
std::vector<std::vector<Peak>> synthetic_peaks(const SyntheticDatasetSpec& spec);

/// Sum of Gaussian peaks evaluated at `points`.
std::vector<double> render_peaks(std::span<const Peak> peaks, std::span<const double> points);

/// Class template plus white noise plus a random linear baseline, on the
/// dataset grid. Labels are "c00", "c01", ...; ids "<label>-<index>".
std::vector<Spectrum> generate_synthetic(const SyntheticDatasetSpec& spec);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  ArchitectureConfig arch;
  TrainConfig train;
  NoiseAugConfig augment;
  ShiftSimConfig shift;
  std::size_t n_test_splits = 4;
  VotingConfig voting;
  /// When non-empty, M is chosen from these on the validation spectra.
  std::vector<std::size_t> voting_candidates;
  std::optional<double> conformal_alpha;
  std::vector<double> alpha_grid{0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
  bool normalize = true;
  /// Defaults to the common range of the data at arch.input_length points.
  std::optional<Grid> grid;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-spectrum preprocessing shared by every workflow.
ResampledSpectrum prepare(const Spectrum& s, const Grid& grid, bool normalize);
std::vector<ResampledSpectrum> prepare(const std::vector<Spectrum>& spectra, const Grid& grid,
                                       bool normalize);

/// Grid used for `data` under `cfg`.
Grid experiment_grid(const ExperimentConfig& cfg, const std::vector<Spectrum>& data);

/// Mean and 1.96 * sample-std / sqrt(n) half-width; no half-width for n = 1.
struct Interval {
  double mean = 0.0;
  std::optional<double> half_width;
};
Interval confidence_interval(std::span<const double> values);

struct CurveRow {
  double alpha = 0.0;
  double theoretical_coverage = 0.0;  // 1 - alpha
  double empirical_coverage = 0.0;
  double average_set_size = 0.0;
  double tau = 0.0;
  bool degenerate = false;
};

/// Calibrates once per alpha on (cal_results, cal_truths) and measures the
/// resulting sets on the test side. Rows follow `alphas` order.
std::vector<CurveRow> coverage_size_curve(const std::vector<MatchResult>& cal_results,
                                          const std::vector<std::string>& cal_truths,
                                          const std::vector<MatchResult>& test_results,
                                          const std::vector<std::string>& test_truths,
                                          std::span<const double> alphas);

struct ConformalSummary {
  double alpha = 0.0;
  double tau = 0.0;
  std::size_t calibration_size = 0;
  bool degenerate = false;
  double coverage = 0.0;
  double average_set_size = 0.0;
};

struct MemberSummary {
  std::uint64_t seed = 0;
  std::size_t best_step = 0;
  double best_val_accuracy = 0.0;
  double final_loss = 0.0;
};

struct MethodAccuracy {
  std::string method;  // "siamese", "1nn-euclidean", ...
  AccuracyReport report;
};

struct SplitOutcome {
  std::size_t index = 0;
  std::uint64_t split_seed = 0;
  std::size_t n_train = 0;
  std::size_t n_train_augmented = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::vector<std::string> excluded_classes;
  std::size_t voting_m = 1;
  std::vector<MemberSummary> members;
  std::vector<MethodAccuracy> methods;  // siamese first, then the baselines
  std::optional<ConformalSummary> conformal;
  std::vector<CurveRow> curve;
  std::vector<std::string> match_records;  // test MatchResults as JSON lines
};

struct ExperimentReport {
  std::string config_text;
  std::uint64_t config_hash = 0;
  Grid grid;
  std::vector<SplitOutcome> splits;

  /// Top-1 accuracy of `method` across splits.
  Interval top1(std::string_view method) const;
  /// Human-readable document.
  std::string to_text() const;
  /// One JSON object per line: split rows, summary rows and curve rows.
  std::string to_records() const;
};

struct RunOptions {
  std::size_t threads = 1;
  /// Receives "split i: ..." progress lines; never part of the report.
  std::function<void(const std::string&)> progress;
};

class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(std::uint64_t split_seed, const std::string& what);
  std::uint64_t split_seed() const { return split_seed_; }

 private:
  std::uint64_t split_seed_;
};

/// Leave-one-out test splits (or the role column when the data carries test
/// records), augmentation, ensemble training, library matching, baselines and
/// optional conformal calibration on the validation spectra. `config_text`
/// is echoed into the report and hashed.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<Spectrum>& data,
                                const std::string& config_text = {},
                                const RunOptions& options = {});

}  // namespace ramanmatch
