// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ramanmatch/hash.hpp"

namespace ramanmatch {

namespace {

struct SlotLayout {
  double lo = 0.0;
  double width = 0.0;
  std::size_t count = 0;
};

SlotLayout slot_layout(const SyntheticDatasetSpec& spec) {
  SlotLayout s;
  s.lo = spec.grid.min + spec.min_peak_separation;
  const double hi = spec.grid.max - spec.min_peak_separation;
  s.width = 2.0 * spec.min_peak_separation;
  s.count = hi > s.lo ? static_cast<std::size_t>(std::floor((hi - s.lo) / s.width)) : 0;
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fixed4(double v) { return std::isnan(v) ? std::string("-") : fmt("%.4f", v); }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::vector<std::string> labels_of(const std::vector<ResampledSpectrum>& spectra) {
  std::vector<std::string> out;
  out.reserve(spectra.size());
  for (const auto& s : spectra) out.push_back(s.class_label);
  return out;
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synthetic data needs at least two classes");
  if (spectra_per_class < 1) throw std::invalid_argument("spectra_per_class must be positive");
  if (min_peaks < 1 || max_peaks < min_peaks) {
    throw std::invalid_argument("peak count range must satisfy 1 <= min_peaks <= max_peaks");
  }
  if (!(min_peak_width > 0.0) || max_peak_width < min_peak_width) {
    throw std::invalid_argument("peak width range must be positive and ordered");
  }
  if (!(min_peak_separation > 0.0)) {
    throw std::invalid_argument("min_peak_separation must be positive");
  }
  if (!(noise_sigma >= 0.0) || !(baseline_scale >= 0.0)) {
    throw std::invalid_argument("noise_sigma and baseline_scale must be non-negative");
  }
  if (grid.length < 2 || !(grid.max > grid.min)) {
    throw std::invalid_argument("synthetic grid needs max > min and at least two points");
  }
  const auto slots = slot_layout(*this).count;
  if (slots < n_classes * max_peaks) {
    throw std::invalid_argument("grid too narrow for " + std::to_string(n_classes * max_peaks) +
                                " separated peaks (room for " + std::to_string(slots) + ")");
  }
}

std::vector<std::vector<Peak>> synthetic_peaks(const SyntheticDatasetSpec& spec) {
  spec.validate();
  const auto layout = slot_layout(spec);
  nd::Rng rng(mix_seed(spec.rng_seed, 1));
  std::vector<std::size_t> slots(layout.count);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  std::uniform_int_distribution<std::size_t> n_peaks(spec.min_peaks, spec.max_peaks);
  std::uniform_real_distribution<double> jitter(-0.5 * spec.min_peak_separation,
                                                0.5 * spec.min_peak_separation);
  std::uniform_real_distribution<double> height(0.2, 1.0);
  std::uniform_real_distribution<double> width(spec.min_peak_width, spec.max_peak_width);

  std::vector<std::vector<Peak>> classes(spec.n_classes);
  std::size_t next = 0;
  for (auto& peaks : classes) {
    const std::size_t n = n_peaks(rng);
    for (std::size_t i = 0; i < n; ++i) {
      Peak p;
      p.position = layout.lo + (double(slots[next++]) + 0.5) * layout.width + jitter(rng);
      p.height = height(rng);
      p.width = width(rng);
      peaks.push_back(p);
    }
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.position < b.position; });
  }
  return classes;
}

std::vector<double> render_peaks(std::span<const Peak> peaks, std::span<const double> points) {
  std::vector<double> out(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (const auto& p : peaks) {
      const double z = (points[i] - p.position) / p.width;
      out[i] += p.height * std::exp(-0.5 * z * z);
    }
  }
  return out;
}

std::vector<Spectrum> generate_synthetic(const SyntheticDatasetSpec& spec) {
  const auto classes = synthetic_peaks(spec);
  const auto points = spec.grid.points();
  const double mid = 0.5 * (spec.grid.min + spec.grid.max);
  const double half = 0.5 * (spec.grid.max - spec.grid.min);
  const double amp = spec.baseline_scale * spec.noise_sigma;

  nd::Rng rng(mix_seed(spec.rng_seed, 2));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::vector<Spectrum> out;
  out.reserve(spec.n_classes * spec.spectra_per_class);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto tmpl = render_peaks(classes[c], points);
    char label[16];
    std::snprintf(label, sizeof label, "c%02zu", c);
    for (std::size_t i = 0; i < spec.spectra_per_class; ++i) {
      Spectrum s;
      s.wavenumbers = points;
      s.class_label = label;
      s.source_id = std::string(label) + "-" + std::to_string(i);
      const double offset = amp * unit(rng);
      const double tilt = amp * unit(rng);
      s.intensities.resize(points.size());
      for (std::size_t w = 0; w < points.size(); ++w) {
        const double noise = spec.noise_sigma * normal(rng);
        s.intensities[w] = tmpl[w] + noise + offset + tilt * (points[w] - mid) / half;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

void ExperimentConfig::validate() const {
  arch.validate();
  train.validate();
  augment.validate();
  shift.validate();
  if (n_test_splits < 1) throw std::invalid_argument("n_test_splits must be at least 1");
  if (voting.M < 1) throw std::invalid_argument("voting M must be at least 1");
  for (auto m : voting_candidates) {
    if (m < 1) throw std::invalid_argument("voting candidates must be at least 1");
  }
  if (conformal_alpha && !(*conformal_alpha > 0.0 && *conformal_alpha < 1.0)) {
    throw std::invalid_argument("conformal alpha must be in (0, 1)");
  }
  for (double a : alpha_grid) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha grid values must be in (0, 1)");
  }
  if (grid && grid->length != arch.input_length) {
    throw std::invalid_argument("grid length " + std::to_string(grid->length) +
                                " differs from the network input length " +
                                std::to_string(arch.input_length));
  }
}

ResampledSpectrum prepare(const Spectrum& s, const Grid& grid, bool normalize) {
  auto r = resample_to_grid(s, grid);
  if (normalize) min_max_normalize(r);
  return r;
}

std::vector<ResampledSpectrum> prepare(const std::vector<Spectrum>& spectra, const Grid& grid,
                                       bool normalize) {
  std::vector<ResampledSpectrum> out;
  out.reserve(spectra.size());
  for (const auto& s : spectra) out.push_back(prepare(s, grid, normalize));
  return out;
}

Grid experiment_grid(const ExperimentConfig& cfg, const std::vector<Spectrum>& data) {
  return cfg.grid ? *cfg.grid : common_grid(data, cfg.arch.input_length);
}

Interval confidence_interval(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("confidence interval of no values");
  const double n = static_cast<double>(values.size());
  Interval ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
    ci.half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return ci;
}

std::vector<CurveRow> coverage_size_curve(const std::vector<MatchResult>& cal_results,
                                          const std::vector<std::string>& cal_truths,
                                          const std::vector<MatchResult>& test_results,
                                          const std::vector<std::string>& test_truths,
                                          std::span<const double> alphas) {
  std::vector<CurveRow> rows;
  for (double alpha : alphas) {
    const auto cal = calibrate(cal_results, cal_truths, alpha);
    std::vector<PredictionSet> sets;
    sets.reserve(test_results.size());
    for (const auto& r : test_results) sets.push_back(predict_set(r, cal));
    CurveRow row;
    row.alpha = alpha;
    row.theoretical_coverage = 1.0 - alpha;
    row.empirical_coverage = empirical_coverage(sets, test_truths);
    row.average_set_size = average_set_size(sets);
    row.tau = cal.tau;
    row.degenerate = cal.degenerate;
    rows.push_back(row);
  }
  return rows;
}

ExperimentError::ExperimentError(std::uint64_t split_seed, const std::string& what)
    : std::runtime_error("split seed " + std::to_string(split_seed) + ": " + what),
      split_seed_(split_seed) {}

namespace {

SplitOutcome run_split(const ExperimentConfig& cfg, const DatasetSplit& split, const Grid& grid,
                       std::size_t index, const RunOptions& options) {
  auto note = [&](const std::string& msg) {
    if (options.progress) options.progress("split " + std::to_string(index) + ": " + msg);
  };
  const std::uint64_t seed = split.split_seed;
  SplitOutcome out;
  out.index = index;
  out.split_seed = seed;
  out.excluded_classes = split.excluded_classes;

  auto train = prepare(split.train, grid, cfg.normalize);
  auto test = prepare(split.test, grid, cfg.normalize);
  ReferenceLibrary lib(train);

  std::vector<ResampledSpectrum> validation;
  for (auto& v : prepare(split.validation, grid, cfg.normalize)) {
    if (lib.contains_class(v.class_label)) validation.push_back(std::move(v));
  }
  for (const auto& t : test) {
    if (!lib.contains_class(t.class_label)) {
      throw std::runtime_error("test class '" + t.class_label + "' of '" + t.source_id +
                               "' has no training spectra");
    }
  }
  out.n_train = train.size();
  out.n_validation = validation.size();
  out.n_test = test.size();

  NoiseAugConfig aug = cfg.augment;
  aug.rng_seed = mix_seed(seed ^ cfg.augment.rng_seed, 2);
  TrainConfig tcfg = cfg.train;
  tcfg.rng_seed = mix_seed(seed ^ cfg.train.rng_seed, 3);

  TrainingData data;
  data.train = augment_dataset(train, aug);
  data.validation = validation.empty() ? train : validation;
  data.grid_step = grid.step();
  data.shift = cfg.shift;
  data.shift.rng_seed = mix_seed(seed ^ cfg.shift.rng_seed, 4);
  out.n_train_augmented = data.train.size();
  note("training " + std::to_string(tcfg.ensemble_size) + " members on " +
       std::to_string(data.train.size()) + " spectra");

  auto trained = train_ensemble(data, cfg.arch, tcfg, options.threads);
  for (const auto& m : trained.members) {
    out.members.push_back(
        {m.seed, m.best_step, m.best_val_accuracy, m.log.empty() ? 0.0 : m.log.back().loss});
  }
  const Ensemble& ens = trained.ensemble;
  lib.build_cache(ens);

  std::vector<MatchResult> val_results;
  if (!validation.empty()) val_results = score_queries(validation, lib, ens, options.threads);
  out.voting_m = cfg.voting.M;
  if (!cfg.voting_candidates.empty() && !validation.empty()) {
    out.voting_m = select_voting_m(validation, val_results, lib, cfg.voting_candidates);
  }

  note("scoring " + std::to_string(test.size()) + " test spectra");
  const auto results = score_queries(test, lib, ens, options.threads);
  for (const auto& r : results) out.match_records.push_back(to_json_line(r));
  out.methods.push_back(
      {"siamese", accuracy_from_results(test, results, lib, VotingConfig{out.voting_m})});
  for (Metric m : {Metric::euclidean, Metric::manhattan, Metric::cosine}) {
    out.methods.push_back(
        {"1nn-" + std::string(to_string(m)), baseline_accuracy(test, lib, m)});
  }

  if (cfg.conformal_alpha) {
    if (validation.empty()) {
      note("no validation spectra; conformal calibration skipped");
    } else {
      const auto val_truths = labels_of(validation);
      const auto test_truths = labels_of(test);
      const auto cal = calibrate(val_results, val_truths, *cfg.conformal_alpha);
      std::vector<PredictionSet> sets;
      for (const auto& r : results) sets.push_back(predict_set(r, cal));
      out.conformal = ConformalSummary{cal.alpha,
                                       cal.tau,
                                       cal.calibration_size,
                                       cal.degenerate,
                                       empirical_coverage(sets, test_truths),
                                       average_set_size(sets)};
      out.curve =
          coverage_size_curve(val_results, val_truths, results, test_truths, cfg.alpha_grid);
    }
  }
  return out;
}

nlohmann::ordered_json json_or_null(std::optional<double> v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json json_number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::vector<Spectrum>& data,
                                const std::string& config_text, const RunOptions& options) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("no spectra to run an experiment on");
  ExperimentReport report;
  report.config_text = config_text;
  report.config_hash = fnv1a(config_text);
  report.grid = experiment_grid(cfg, data);

  const bool fixed_test =
      std::any_of(data.begin(), data.end(), [](const Spectrum& s) { return s.role == Role::test; });
  const std::size_t n_splits = fixed_test ? 1 : cfg.n_test_splits;
  for (std::size_t i = 0; i < n_splits; ++i) {
    const std::uint64_t split_seed = mix_seed(cfg.seed, 100 + i);
    try {
      DatasetSplit split;
      if (fixed_test) {
        split = split_by_role(data);
        split.split_seed = split_seed;
      } else {
        split = make_test_split(data, split_seed);
        hold_out_validation(split, mix_seed(split_seed, 1));
      }
      report.splits.push_back(run_split(cfg, split, report.grid, i, options));
    } catch (const std::exception& e) {
      throw ExperimentError(split_seed, e.what());
    }
  }
  return report;
}

Interval ExperimentReport::top1(std::string_view method) const {
  std::vector<double> values;
  for (const auto& s : splits) {
    for (const auto& m : s.methods) {
      if (m.method == method) values.push_back(m.report.top1);
    }
  }
  if (values.empty()) throw std::invalid_argument("no results for method " + std::string(method));
  return confidence_interval(values);
}

std::string ExperimentReport::to_text() const {
  std::ostringstream o;
  o << "ramanmatch experiment report\n";
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash));
    o << "config hash: " << buf << "\n";
  }
  o << "grid: " << fmt("%g", grid.min) << " to " << fmt("%g", grid.max) << " cm^-1, "
    << grid.length << " points\n";
  o << "splits: " << splits.size() << "\n";

  for (const auto& s : splits) {
    o << "\n== split " << s.index << " (seed " << s.split_seed << ") ==\n";
    o << "train " << s.n_train << " (augmented to " << s.n_train_augmented << "), validation "
      << s.n_validation << ", test " << s.n_test << "\n";
    o << "excluded classes:";
    if (s.excluded_classes.empty()) o << " none";
    for (const auto& c : s.excluded_classes) o << " " << c;
    o << "\nvoting M: " << s.voting_m << "\n";
    o << "members:\n";
    for (const auto& m : s.members) {
      o << "  seed " << m.seed << "  best step " << m.best_step << "  val accuracy "
        << fixed4(m.best_val_accuracy) << "  final loss " << fixed4(m.final_loss) << "\n";
    }
    o << "accuracy:\n  " << pad("method", 16) << pad("top1", 8) << pad("top3", 8) << "top5\n";
    for (const auto& m : s.methods) {
      o << "  " << pad(m.method, 16) << pad(fixed4(m.report.top1), 8)
        << pad(fixed4(m.report.top3), 8) << fixed4(m.report.top5) << "\n";
    }
    if (s.conformal) {
      const auto& c = *s.conformal;
      o << "conformal alpha " << fmt("%g", c.alpha) << ": tau " << fmt("%.6g", c.tau) << ", n "
        << c.calibration_size << (c.degenerate ? " (too few points, all classes admitted)" : "")
        << ", coverage " << fixed4(c.coverage) << ", average set size "
        << fixed4(c.average_set_size) << "\n";
    }
    if (!s.curve.empty()) {
      o << "coverage curve:\n  " << pad("alpha", 8) << pad("1-alpha", 9) << pad("empirical", 11)
        << pad("size", 8) << "tau\n";
      for (const auto& r : s.curve) {
        o << "  " << pad(fmt("%g", r.alpha), 8) << pad(fixed4(r.theoretical_coverage), 9)
          << pad(fixed4(r.empirical_coverage), 11) << pad(fixed4(r.average_set_size), 8)
          << fmt("%.6g", r.tau) << "\n";
      }
    }
  }

  if (!splits.empty()) {
    o << "\n== summary: top-1 accuracy, mean and 95% interval over " << splits.size()
      << " split(s) ==\n";
    for (const auto& m : splits.front().methods) {
      const auto ci = top1(m.method);
      o << "  " << pad(m.method, 16) << fixed4(ci.mean) << " +/- "
        << (ci.half_width ? fixed4(*ci.half_width) : std::string("n/a")) << "\n";
    }
  }
  if (!config_text.empty()) {
    o << "\n== config ==\n" << config_text;
    if (config_text.back() != '\n') o << "\n";
  }
  return o.str();
}

std::string ExperimentReport::to_records() const {
  std::ostringstream o;
  for (const auto& s : splits) {
    for (const auto& m : s.methods) {
      nlohmann::ordered_json j;
      j["record"] = "accuracy";
      j["split"] = s.index;
      j["split_seed"] = s.split_seed;
      j["method"] = m.method;
      j["n"] = m.report.n;
      j["top1"] = json_number(m.report.top1);
      j["top3"] = json_number(m.report.top3);
      j["top5"] = json_number(m.report.top5);
      if (m.method == "siamese") j["voting_m"] = s.voting_m;
      o << j.dump() << "\n";
    }
    if (s.conformal) {
      nlohmann::ordered_json j;
      j["record"] = "calibration";
      j["split"] = s.index;
      j["alpha"] = s.conformal->alpha;
      j["tau"] = json_number(s.conformal->tau);
      j["n"] = s.conformal->calibration_size;
      j["degenerate"] = s.conformal->degenerate;
      j["coverage"] = s.conformal->coverage;
      j["average_set_size"] = s.conformal->average_set_size;
      o << j.dump() << "\n";
    }
    for (const auto& r : s.curve) {
      nlohmann::ordered_json j;
      j["record"] = "curve";
      j["split"] = s.index;
      j["alpha"] = r.alpha;
      j["theoretical_coverage"] = r.theoretical_coverage;
      j["empirical_coverage"] = r.empirical_coverage;
      j["average_set_size"] = r.average_set_size;
      j["tau"] = json_number(r.tau);
      o << j.dump() << "\n";
    }
  }
  if (!splits.empty()) {
    for (const auto& m : splits.front().methods) {
      const auto ci = top1(m.method);
      nlohmann::ordered_json j;
      j["record"] = "summary";
      j["method"] = m.method;
      j["splits"] = splits.size();
      j["top1_mean"] = ci.mean;
      j["top1_ci_half_width"] = json_or_null(ci.half_width);
      o << j.dump() << "\n";
    }
  }
  return o.str();
}

}  // namespace ramanmatch
