// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ramanmatch/ndcore.hpp"
#include "ramanmatch/spectra_io.hpp"

namespace ramanmatch {

struct NoiseAugConfig {
  std::size_t K = 10;   // sliding window over the first difference
  double kappa = 5.0;   // variance multiplier
  std::uint64_t rng_seed = 0;
  /// Classes are filled up to max(count, min_class_size) unless above 100.
  std::size_t min_class_size = 10;

  void validate() const;
};

struct ShiftSimConfig {
  double positive_shift = 3.0;         // cm^-1
  double negative_shift_mean = 150.0;  // cm^-1
  double negative_shift_std = 50.0;    // cm^-1
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Classes larger than this are never augmented.
inline constexpr std::size_t kNoAugmentAbove = 100;

/// Per-index variance of the first difference over a forward window of K
/// samples. The first difference exists from index 1 onwards; windows that
/// run off either end are truncated, keeping at least two samples.
std::vector<double> derivative_window_variance(std::span<const double> s,
                                               std::size_t K);

/// One noisy copy: each intensity drawn from Normal(s_w, kappa * sigma_w^2).
ResampledSpectrum noise_augment(const ResampledSpectrum& s,
                                const NoiseAugConfig& cfg, nd::Rng& rng);

/// Count a class is augmented to under `cfg`.
std::size_t augment_target(std::size_t count, const NoiseAugConfig& cfg);

/// Returns the originals followed by synthetic spectra up to `target_count`.
/// One spectrum: noise copies. 2..100: convex combinations of random pairs.
/// Above 100: unchanged.
std::vector<ResampledSpectrum> augment_class(
    const std::vector<ResampledSpectrum>& spectra, std::size_t target_count,
    const NoiseAugConfig& cfg, nd::Rng& rng);

/// Groups by class (sorted label order) and augments each to
/// augment_target(count). Output order: class by class.
std::vector<ResampledSpectrum> augment_dataset(
    const std::vector<ResampledSpectrum>& spectra, const NoiseAugConfig& cfg);

/// Moves intensities `steps` indices towards higher wavenumber (negative:
/// lower), filling vacated positions with the nearest edge value.
std::vector<double> shift_intensities(std::span<const double> s, long steps);

/// Nearest whole number of grid steps for a shift in cm^-1.
long shift_to_steps(double shift_cm, double grid_step);

/// |Normal(mean, std)| re-drawn while below 3x the positive shift.
double draw_negative_shift(const ShiftSimConfig& cfg, nd::Rng& rng);

struct SimulatedPairs {
  std::vector<ResampledSpectrum> first;
  std::vector<ResampledSpectrum> second;
  std::vector<double> labels;  // 1 same substance, 0 different

  std::size_t size() const { return labels.size(); }
};

/// Validation pairs from shifted copies: even slots are positives (small
/// shift), odd slots negatives (large shift). Direction is a fair coin.
SimulatedPairs simulate_validation_pairs(
    const std::vector<ResampledSpectrum>& spectra, double grid_step,
    const ShiftSimConfig& cfg, std::size_t count, nd::Rng& rng);

}  // namespace ramanmatch
