// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ramanmatch {

enum class Role { reference, train, validation, test };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct Spectrum {
  std::vector<double> wavenumbers;  // cm^-1, strictly increasing
  std::vector<double> intensities;  // arbitrary units
  std::string class_label;
  std::string source_id;
  Role role = Role::train;
};

/// Intensities on a shared uniform grid of fixed length.
struct ResampledSpectrum {
  std::vector<double> intensities;
  std::string class_label;
  std::string source_id;
  bool mostly_edge_filled = false;  // more than 20% of points clamped
};

struct Grid {
  double min = 0.0;
  double max = 0.0;
  std::size_t length = 0;

  double step() const { return (max - min) / static_cast<double>(length - 1); }
  /// Grid coordinates; the last point is exactly `max`.
  std::vector<double> points() const;
};

enum class Format { csv, jsonl };

Format format_from_path(const std::filesystem::path& path);

class SpectrumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws SpectrumError naming the source_id when an invariant fails.
void validate(const Spectrum& s);

std::vector<Spectrum> read_spectra(std::istream& in, Format format);
std::vector<Spectrum> load_spectra(const std::filesystem::path& path,
                                   Format format);
void write_spectra(std::ostream& out, const std::vector<Spectrum>& spectra,
                   Format format);
void save_spectra(const std::filesystem::path& path,
                  const std::vector<Spectrum>& spectra, Format format);

/// Linear interpolation onto `grid`; points outside the measured range take
/// the nearest edge intensity.
ResampledSpectrum resample_to_grid(const Spectrum& s, const Grid& grid);

/// Intersection of all wavenumber ranges. Throws if empty.
Grid common_grid(const std::vector<Spectrum>& spectra, std::size_t length);

/// Scales intensities into [0, 1]; a flat spectrum becomes all zeros.
void min_max_normalize(ResampledSpectrum& s);

struct DatasetSplit {
  std::vector<Spectrum> train;
  std::vector<Spectrum> validation;
  std::vector<Spectrum> test;
  std::uint64_t split_seed = 0;
  /// Classes with a single spectrum; kept in train, never tested.
  std::vector<std::string> excluded_classes;
};

/// Moves one randomly chosen spectrum of every class with at least two
/// spectra into the test set. Output order follows input order.
DatasetSplit make_test_split(const std::vector<Spectrum>& spectra,
                             std::uint64_t seed);

/// Moves one spectrum per class from train to validation, for classes that
/// keep at least `min_train_remaining` spectra in train.
void hold_out_validation(DatasetSplit& split, std::uint64_t seed,
                         std::size_t min_train_remaining = 1);

/// Uses the role column instead of random sampling: test records form the
/// test set, validation records the validation set, everything else trains.
DatasetSplit split_by_role(const std::vector<Spectrum>& spectra);

}  // namespace ramanmatch
