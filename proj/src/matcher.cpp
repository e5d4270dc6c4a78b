// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/matcher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include <json.hpp>

#include "ramanmatch/hash.hpp"

namespace ramanmatch {

using nd::Tensor;

namespace {

constexpr std::size_t kChunk = 64;
constexpr double kTieTolerance = 1e-15;

Tensor features_of(const SiameseNetwork& net, const nd::ParameterSet& params,
                   const std::vector<ResampledSpectrum>& spectra) {
  const auto& arch = net.config();
  Tensor out(spectra.size(), arch.feature_channels(), arch.feature_width());
  for (std::size_t from = 0; from < spectra.size(); from += kChunk) {
    const std::size_t to = std::min(from + kChunk, spectra.size());
    std::vector<const ResampledSpectrum*> ptrs;
    for (std::size_t i = from; i < to; ++i) ptrs.push_back(&spectra[i]);
    Tensor f = net.features(params, to_batch(ptrs));
    std::copy(f.values().begin(), f.values().end(),
              out.values().begin() + std::ptrdiff_t(from * f.channels() * f.width()));
  }
  return out;
}

Tensor slice(const Tensor& t, std::size_t from, std::size_t to) {
  Tensor out(to - from, t.channels(), t.width());
  const auto stride = std::ptrdiff_t(t.channels() * t.width());
  std::copy(t.values().begin() + std::ptrdiff_t(from) * stride,
            t.values().begin() + std::ptrdiff_t(to) * stride, out.values().begin());
  return out;
}

Tensor repeat(const Tensor& one, std::size_t item, std::size_t times) {
  Tensor out(times, one.channels(), one.width());
  auto src = one.item(item);
  for (std::size_t i = 0; i < times; ++i) std::copy(src.begin(), src.end(), out.item(i).begin());
  return out;
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::uint64_t ensemble_fingerprint(const Ensemble& ensemble) {
  Fnv1a h;
  const std::uint64_t arch = ensemble.arch.hash();
  h.update(&arch, sizeof arch);
  for (const auto& m : ensemble.members) {
    const std::uint64_t c = m.checksum();
    h.update(&c, sizeof c);
  }
  return h.digest();
}

ReferenceLibrary::ReferenceLibrary(std::vector<ResampledSpectrum> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw std::invalid_argument("reference library is empty");
  std::set<std::string> labels;
  for (const auto& e : entries_) labels.insert(e.class_label);
  classes_.assign(labels.begin(), labels.end());
}

bool ReferenceLibrary::contains_class(std::string_view label) const {
  return std::binary_search(classes_.begin(), classes_.end(), label);
}

void ReferenceLibrary::build_cache(const Ensemble& ensemble) {
  SiameseNetwork net(ensemble.arch);
  cache_.clear();
  for (const auto& member : ensemble.members) cache_.push_back(features_of(net, member, entries_));
  fingerprint_ = ensemble_fingerprint(ensemble);
  cached_ = true;
}

bool ReferenceLibrary::cache_valid(const Ensemble& ensemble) const {
  return cached_ && cache_.size() == ensemble.size() &&
         fingerprint_ == ensemble_fingerprint(ensemble);
}

const Tensor& ReferenceLibrary::features(const Ensemble& ensemble, std::size_t member) const {
  if (!cache_valid(ensemble)) {
    throw StaleCacheError("reference library features were not built for this ensemble");
  }
  return cache_.at(member);
}

MatchResult rank_classes(const ReferenceLibrary& lib, std::vector<double> per_reference,
                         std::string query_id) {
  if (per_reference.size() != lib.size()) {
    throw std::invalid_argument("score count does not match library size");
  }
  std::map<std::string, double, std::less<>> best;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& label = lib.entries()[i].class_label;
    auto [it, inserted] = best.emplace(label, per_reference[i]);
    if (!inserted) it->second = std::max(it->second, per_reference[i]);
  }
  MatchResult r;
  r.query_id = std::move(query_id);
  for (const auto& [label, p] : best) r.ranked.push_back({label, p});
  std::stable_sort(r.ranked.begin(), r.ranked.end(),
                   [](const ClassScore& a, const ClassScore& b) { return a.p > b.p; });
  // Near-equal neighbours fall back to label order.
  for (bool swapped = true; swapped;) {
    swapped = false;
    for (std::size_t i = 0; i + 1 < r.ranked.size(); ++i) {
      auto& a = r.ranked[i];
      auto& b = r.ranked[i + 1];
      if (std::abs(a.p - b.p) <= kTieTolerance && b.label < a.label) {
        std::swap(a, b);
        swapped = true;
      }
    }
  }
  r.per_reference = std::move(per_reference);
  r.predicted = r.ranked.front().label;
  return r;
}

std::vector<MatchResult> score_queries(const std::vector<ResampledSpectrum>& queries,
                                       const ReferenceLibrary& lib, const Ensemble& ensemble,
                                       std::size_t threads) {
  if (ensemble.size() == 0) throw std::invalid_argument("ensemble has no members");
  for (std::size_t m = 0; m < ensemble.size(); ++m) lib.features(ensemble, m);
  SiameseNetwork net(ensemble.arch);
  for (const auto& q : queries) {
    if (q.intensities.size() != ensemble.arch.input_length) {
      throw std::invalid_argument("query '" + q.source_id + "' has length " +
                                  std::to_string(q.intensities.size()) + ", expected " +
                                  std::to_string(ensemble.arch.input_length));
    }
  }

  std::vector<MatchResult> results(queries.size());
  const std::size_t n_chunks = (queries.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, threads, [&](std::size_t chunk) {
    const std::size_t from = chunk * kChunk;
    const std::size_t to = std::min(from + kChunk, queries.size());
    std::vector<ResampledSpectrum> part(queries.begin() + from, queries.begin() + to);
    std::vector<std::vector<double>> sums(part.size(), std::vector<double>(lib.size(), 0.0));
    for (std::size_t m = 0; m < ensemble.size(); ++m) {
      const auto& params = ensemble.members[m];
      const Tensor qf = features_of(net, params, part);
      const Tensor& rf = lib.features(ensemble, m);
      for (std::size_t q = 0; q < part.size(); ++q) {
        for (std::size_t r0 = 0; r0 < lib.size(); r0 += kChunk) {
          const std::size_t r1 = std::min(r0 + kChunk, lib.size());
          auto scores = net.head_scores(params, repeat(qf, q, r1 - r0), slice(rf, r0, r1));
          for (std::size_t r = r0; r < r1; ++r) sums[q][r] += scores[r - r0].p;
        }
      }
    }
    for (std::size_t q = 0; q < part.size(); ++q) {
      for (double& s : sums[q]) s /= double(ensemble.size());
      results[from + q] = rank_classes(lib, std::move(sums[q]), part[q].source_id);
    }
  });
  return results;
}

MatchResult score_against_library(const ResampledSpectrum& query, const ReferenceLibrary& lib,
                                  const Ensemble& ensemble) {
  return score_queries({query}, lib, ensemble).front();
}

std::string majority_vote(std::span<const Vote> votes) {
  if (votes.empty()) throw std::invalid_argument("no votes to count");
  std::map<std::string, std::pair<std::size_t, double>> tally;
  for (const auto& v : votes) {
    auto& t = tally[v.label];
    ++t.first;
    t.second += v.score;
  }
  auto best = tally.begin();
  for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
    const auto& [count, sum] = it->second;
    if (count > best->second.first ||
        (count == best->second.first && sum > best->second.second)) {
      best = it;
    }
  }
  return best->first;
}

std::string classify(const MatchResult& result, const VotingConfig& voting,
                     std::span<const MatchResult> scans) {
  if (voting.M == 0) throw std::invalid_argument("voting M must be at least 1");
  if (result.ranked.empty()) throw std::invalid_argument("empty match result");
  if (voting.M == 1 && scans.empty()) return result.ranked.front().label;
  std::span<const MatchResult> pool = scans.empty() ? std::span(&result, 1) : scans;
  std::vector<Vote> votes;
  for (const auto& scan : pool) {
    const std::size_t m = std::min(voting.M, scan.ranked.size());
    for (std::size_t i = 0; i < m; ++i) votes.push_back({scan.ranked[i].label, scan.ranked[i].p});
  }
  return majority_vote(votes);
}

std::string specimen_of(std::string_view source_id) {
  return std::string(source_id.substr(0, source_id.find('#')));
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::euclidean: return "euclidean";
    case Metric::manhattan: return "manhattan";
    case Metric::cosine: return "cosine";
  }
  return "?";
}

std::string nn_baseline(const ResampledSpectrum& query, const ReferenceLibrary& lib,
                        Metric metric) {
  const auto& q = query.intensities;
  double qnorm = 0.0;
  for (double v : q) qnorm += v * v;
  qnorm = std::sqrt(qnorm);
  if (metric == Metric::cosine && qnorm == 0.0) {
    throw std::invalid_argument("cosine similarity of the all-zero query '" + query.source_id +
                                "' is undefined");
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = lib.size();
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& r = lib.entries()[i].intensities;
    if (r.size() != q.size()) throw std::invalid_argument("query and reference lengths differ");
    double cost = 0.0;
    if (metric == Metric::cosine) {
      double dot = 0.0, rn = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        dot += q[j] * r[j];
        rn += r[j] * r[j];
      }
      if (rn == 0.0) continue;
      cost = -dot / (qnorm * std::sqrt(rn));
    } else if (metric == Metric::manhattan) {
      for (std::size_t j = 0; j < q.size(); ++j) cost += std::abs(q[j] - r[j]);
    } else {
      for (std::size_t j = 0; j < q.size(); ++j) cost += (q[j] - r[j]) * (q[j] - r[j]);
    }
    if (cost < best) {
      best = cost;
      best_i = i;
    }
  }
  if (best_i == lib.size()) throw std::invalid_argument("no usable reference for cosine matching");
  return lib.entries()[best_i].class_label;
}

namespace {

void require_known(const std::vector<ResampledSpectrum>& queries, const ReferenceLibrary& lib) {
  if (queries.empty()) throw std::invalid_argument("accuracy of an empty test set is undefined");
  for (const auto& q : queries) {
    if (!lib.contains_class(q.class_label)) {
      throw std::invalid_argument("test class '" + q.class_label + "' of '" + q.source_id +
                                  "' is not in the reference library");
    }
  }
}

void tally(AccuracyReport& rep, const std::string& truth, const std::string& predicted) {
  auto& pc = rep.per_class[truth];
  ++pc.second;
  if (truth == predicted) ++pc.first;
  ++rep.confusion[{truth, predicted}];
}

}  // namespace

AccuracyReport accuracy_from_results(const std::vector<ResampledSpectrum>& queries,
                                     const std::vector<MatchResult>& results,
                                     const ReferenceLibrary& lib, const VotingConfig& voting) {
  require_known(queries, lib);
  if (queries.size() != results.size()) {
    throw std::invalid_argument("query and result counts differ");
  }
  std::map<std::string, std::vector<MatchResult>> specimens;
  if (voting.M > 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      specimens[specimen_of(queries[i].source_id)].push_back(results[i]);
    }
  }
  AccuracyReport rep;
  rep.n = queries.size();
  std::size_t top1 = 0, top3 = 0, top5 = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& truth = queries[i].class_label;
    const auto& r = results[i];
    const std::string predicted =
        voting.M > 1 ? classify(r, voting, specimens.at(specimen_of(queries[i].source_id)))
                     : classify(r, voting);
    if (predicted == truth) ++top1;
    for (std::size_t k = 0; k < r.ranked.size() && k < 5; ++k) {
      if (r.ranked[k].label != truth) continue;
      if (k < 3) ++top3;
      ++top5;
    }
    tally(rep, truth, predicted);
  }
  const double n = double(rep.n);
  rep.top1 = double(top1) / n;
  rep.top3 = double(top3) / n;
  rep.top5 = double(top5) / n;
  return rep;
}

AccuracyReport evaluate_accuracy(const std::vector<ResampledSpectrum>& test,
                                 const ReferenceLibrary& lib, const Ensemble& ensemble,
                                 const VotingConfig& voting, std::size_t threads) {
  require_known(test, lib);
  return accuracy_from_results(test, score_queries(test, lib, ensemble, threads), lib, voting);
}

AccuracyReport baseline_accuracy(const std::vector<ResampledSpectrum>& test,
                                 const ReferenceLibrary& lib, Metric metric) {
  require_known(test, lib);
  AccuracyReport rep;
  rep.n = test.size();
  std::size_t correct = 0;
  for (const auto& q : test) {
    const std::string predicted = nn_baseline(q, lib, metric);
    if (predicted == q.class_label) ++correct;
    tally(rep, q.class_label, predicted);
  }
  rep.top1 = double(correct) / double(rep.n);
  rep.top3 = rep.top5 = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

std::size_t select_voting_m(const std::vector<ResampledSpectrum>& validation,
                            const std::vector<MatchResult>& results, const ReferenceLibrary& lib,
                            std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no voting candidates");
  std::size_t best_m = 0;
  double best_acc = -1.0;
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t m : sorted) {
    const double acc = accuracy_from_results(validation, results, lib, VotingConfig{m}).top1;
    if (acc > best_acc) {
      best_acc = acc;
      best_m = m;
    }
  }
  return best_m;
}

std::string to_json_line(const MatchResult& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["predicted"] = r.predicted;
  auto top = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.ranked.size() && i < 5; ++i) {
    top.push_back({r.ranked[i].label, r.ranked[i].p});
  }
  j["top"] = std::move(top);
  return j.dump();
}

}  // namespace ramanmatch
