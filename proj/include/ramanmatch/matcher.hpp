// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ramanmatch/trainer.hpp"

namespace ramanmatch {

/// Identifies an ensemble's weights; library feature caches are keyed on it.
std::uint64_t ensemble_fingerprint(const Ensemble& ensemble);

class StaleCacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labeled reference spectra with per-member feature maps.
class ReferenceLibrary {
 public:
  explicit ReferenceLibrary(std::vector<ResampledSpectrum> entries);

  const std::vector<ResampledSpectrum>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Sorted, distinct.
  const std::vector<std::string>& classes() const { return classes_; }
  bool contains_class(std::string_view label) const;

  /// Runs the representation network of every member over every entry.
  void build_cache(const Ensemble& ensemble);
  bool cache_valid(const Ensemble& ensemble) const;
  /// (size(), channels, width) features of one member. Throws StaleCacheError
  /// when the cache was built for different weights.
  const nd::Tensor& features(const Ensemble& ensemble, std::size_t member) const;

 private:
  std::vector<ResampledSpectrum> entries_;
  std::vector<std::string> classes_;
  std::vector<nd::Tensor> cache_;
  std::uint64_t fingerprint_ = 0;
  bool cached_ = false;
};

struct ClassScore {
  std::string label;
  double p = 0.0;
};

struct MatchResult {
  std::string query_id;
  /// One entry per library class, best first.
  std::vector<ClassScore> ranked;
  /// Ensemble-mean similarity to each library entry, in library order.
  std::vector<double> per_reference;
  std::string predicted;
};

/// Groups per-reference scores by class, keeps each class maximum, and ranks
/// them. Scores within 1e-15 of each other order by label.
MatchResult rank_classes(const ReferenceLibrary& lib, std::vector<double> per_reference,
                         std::string query_id = {});

MatchResult score_against_library(const ResampledSpectrum& query,
                                  const ReferenceLibrary& lib, const Ensemble& ensemble);

/// Scores many queries; results are in query order and independent of
/// `threads`.
std::vector<MatchResult> score_queries(const std::vector<ResampledSpectrum>& queries,
                                       const ReferenceLibrary& lib,
                                       const Ensemble& ensemble, std::size_t threads = 1);

struct VotingConfig {
  std::size_t M = 1;
};

struct Vote {
  std::string label;
  double score = 0.0;
};

/// Most votes wins; then the larger summed score; then the smaller label.
std::string majority_vote(std::span<const Vote> votes);

/// M = 1: the top-ranked class. Otherwise every scan in `scans` (or just
/// `result` when none are given) votes for each class in its top M.
std::string classify(const MatchResult& result, const VotingConfig& voting,
                     std::span<const MatchResult> scans = {});

/// Specimen key of a source id: the part before the first '#'.
std::string specimen_of(std::string_view source_id);

enum class Metric { euclidean, manhattan, cosine };

std::string_view to_string(Metric m);

/// Class of the nearest reference (highest similarity for cosine).
std::string nn_baseline(const ResampledSpectrum& query, const ReferenceLibrary& lib,
                        Metric metric);

struct AccuracyReport {
  std::size_t n = 0;
  double top1 = 0.0;  // voted when M > 1
  double top3 = 0.0;
  double top5 = 0.0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  std::map<std::pair<std::string, std::string>, std::size_t> confusion;  // (truth, predicted)
};

/// Accuracy of precomputed results against the queries' labels. With M > 1
/// scans sharing a specimen key vote together.
AccuracyReport accuracy_from_results(const std::vector<ResampledSpectrum>& queries,
                                     const std::vector<MatchResult>& results,
                                     const ReferenceLibrary& lib, const VotingConfig& voting);

AccuracyReport evaluate_accuracy(const std::vector<ResampledSpectrum>& test,
                                 const ReferenceLibrary& lib, const Ensemble& ensemble,
                                 const VotingConfig& voting, std::size_t threads = 1);

AccuracyReport baseline_accuracy(const std::vector<ResampledSpectrum>& test,
                                 const ReferenceLibrary& lib, Metric metric);

/// Best M from `candidates` on validation results; ties pick the smaller M.
std::size_t select_voting_m(const std::vector<ResampledSpectrum>& validation,
                            const std::vector<MatchResult>& results,
                            const ReferenceLibrary& lib,
                            std::span<const std::size_t> candidates);

/// {"query_id", "predicted", "top": [[label, p], ...]} with up to five entries.
std::string to_json_line(const MatchResult& r);

}  // namespace ramanmatch
