// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "ramanmatch/hash.hpp"

namespace ramanmatch {

void NoiseAugConfig::validate() const {
  if (K < 2) throw std::invalid_argument("noise augmentation: K must be at least 2");
  if (!(kappa > 0.0)) throw std::invalid_argument("noise augmentation: kappa must be positive");
}

void ShiftSimConfig::validate() const {
  if (!(positive_shift >= 0.0 && positive_shift < 10.0)) {
    throw std::invalid_argument("shift simulation: positive_shift must be in [0, 10)");
  }
  if (!(negative_shift_std >= 0.0)) {
    throw std::invalid_argument("shift simulation: negative_shift_std must be non-negative");
  }
  if (!(negative_shift_mean > 0.0)) {
    throw std::invalid_argument("shift simulation: negative_shift_mean must be positive");
  }
  if (negative_shift_std == 0.0 && negative_shift_mean < 3.0 * positive_shift) {
    throw std::invalid_argument(
        "shift simulation: negative shifts can never clear 3x positive_shift");
  }
}

std::vector<double> derivative_window_variance(std::span<const double> s,
                                               std::size_t K) {
  const std::size_t L = s.size();
  if (K < 2) throw std::invalid_argument("window length must be at least 2");
  if (L < K + 1) {
    throw std::invalid_argument("spectrum of length " + std::to_string(L) +
                                " is shorter than K + 1 = " + std::to_string(K + 1));
  }
  std::vector<double> d(L, 0.0);
  for (std::size_t w = 1; w < L; ++w) d[w] = s[w] - s[w - 1];

  // Variance at rounding level of the intensities counts as zero.
  double scale = 0.0;
  for (double v : s) scale = std::max(scale, std::abs(v));
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;

  std::vector<double> var(L);
  for (std::size_t w = 0; w < L; ++w) {
    std::size_t lo = std::max<std::size_t>(w, 1);
    std::size_t hi = std::min(w + K, L);
    while (hi - lo < 2) {
      if (lo > 1) --lo;
      else ++hi;
    }
    const double n = static_cast<double>(hi - lo);
    double mu = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mu += d[i];
    mu /= n;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += (d[i] - mu) * (d[i] - mu);
    var[w] = acc / n;
    if (var[w] <= floor * floor) var[w] = 0.0;
  }
  return var;
}

ResampledSpectrum noise_augment(const ResampledSpectrum& s,
                                const NoiseAugConfig& cfg, nd::Rng& rng) {
  cfg.validate();
  const auto var = derivative_window_variance(s.intensities, cfg.K);
  ResampledSpectrum out = s;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t w = 0; w < var.size(); ++w) {
    // Draw unconditionally so the stream position does not depend on data.
    const double z = normal(rng);
    if (var[w] > 0.0) out.intensities[w] += std::sqrt(cfg.kappa * var[w]) * z;
  }
  return out;
}

std::size_t augment_target(std::size_t count, const NoiseAugConfig& cfg) {
  if (count > kNoAugmentAbove) return count;
  return std::max(count, cfg.min_class_size);
}

std::vector<ResampledSpectrum> augment_class(
    const std::vector<ResampledSpectrum>& spectra, std::size_t target_count,
    const NoiseAugConfig& cfg, nd::Rng& rng) {
  if (spectra.empty()) throw std::invalid_argument("augment_class: no spectra");
  for (const auto& s : spectra) {
    if (s.class_label != spectra.front().class_label) {
      throw std::invalid_argument("augment_class: mixed classes '" +
                                  spectra.front().class_label + "' and '" +
                                  s.class_label + "'");
    }
  }
  if (target_count < spectra.size()) {
    throw std::invalid_argument("augment_class: target_count " +
                                std::to_string(target_count) + " below class size " +
                                std::to_string(spectra.size()));
  }
  std::vector<ResampledSpectrum> out = spectra;
  if (spectra.size() > kNoAugmentAbove) return out;
  out.reserve(target_count);

  std::size_t serial = 0;
  if (spectra.size() == 1) {
    while (out.size() < target_count) {
      auto copy = noise_augment(spectra.front(), cfg, rng);
      copy.source_id = spectra.front().source_id + "~noise" + std::to_string(serial++);
      out.push_back(std::move(copy));
    }
    return out;
  }

  std::uniform_int_distribution<std::size_t> pick(0, spectra.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (out.size() < target_count) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    const double lambda = unit(rng);
    const auto& sa = spectra[a].intensities;
    const auto& sb = spectra[b].intensities;
    if (sa.size() != sb.size()) {
      throw std::invalid_argument("augment_class: spectra differ in length");
    }
    ResampledSpectrum mix;
    mix.class_label = spectra.front().class_label;
    mix.source_id = spectra[a].source_id + "~mix" + std::to_string(serial++);
    mix.intensities.resize(sa.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
      mix.intensities[i] = lambda * sa[i] + (1.0 - lambda) * sb[i];
    }
    out.push_back(std::move(mix));
  }
  return out;
}

std::vector<ResampledSpectrum> augment_dataset(
    const std::vector<ResampledSpectrum>& spectra, const NoiseAugConfig& cfg) {
  std::map<std::string, std::vector<ResampledSpectrum>> groups;
  for (const auto& s : spectra) groups[s.class_label].push_back(s);
  std::vector<ResampledSpectrum> out;
  for (const auto& [label, members] : groups) {
    nd::Rng rng(mix_seed(cfg.rng_seed, fnv1a(label)));
    auto aug = augment_class(members, augment_target(members.size(), cfg), cfg, rng);
    std::move(aug.begin(), aug.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<double> shift_intensities(std::span<const double> s, long steps) {
  const long L = static_cast<long>(s.size());
  std::vector<double> out(s.size());
  for (long i = 0; i < L; ++i) {
    const long src = std::clamp(i - steps, 0L, L - 1);
    out[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(src)];
  }
  return out;
}

long shift_to_steps(double shift_cm, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid step must be positive");
  return std::lround(shift_cm / grid_step);
}

double draw_negative_shift(const ShiftSimConfig& cfg, nd::Rng& rng) {
  std::normal_distribution<double> normal(cfg.negative_shift_mean,
                                          cfg.negative_shift_std);
  cfg.validate();
  const double floor = 3.0 * cfg.positive_shift;
  for (;;) {
    const double v = std::abs(normal(rng));
    if (v >= floor) return v;
  }
}

SimulatedPairs simulate_validation_pairs(
    const std::vector<ResampledSpectrum>& spectra, double grid_step,
    const ShiftSimConfig& cfg, std::size_t count, nd::Rng& rng) {
  cfg.validate();
  if (spectra.empty()) throw std::invalid_argument("no spectra to simulate pairs from");
  SimulatedPairs out;
  out.first.reserve(count);
  out.second.reserve(count);
  out.labels.reserve(count);
  std::uniform_int_distribution<std::size_t> pick(0, spectra.size() - 1);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < count; ++i) {
    const bool positive = i % 2 == 0;
    const auto& s = spectra[pick(rng)];
    const double magnitude =
        positive ? cfg.positive_shift : draw_negative_shift(cfg, rng);
    const double signed_shift = coin(rng) ? magnitude : -magnitude;
    ResampledSpectrum shifted = s;
    shifted.intensities =
        shift_intensities(s.intensities, shift_to_steps(signed_shift, grid_step));
    out.first.push_back(s);
    out.second.push_back(std::move(shifted));
    out.labels.push_back(positive ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace ramanmatch
