// SPDX-License-Identifier: Apache-2.0
// ramanmatch command-line tool.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ramanmatch/config.hpp"
#include "ramanmatch/hash.hpp"
#include "ramanmatch/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ramanmatch;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

/// Bad invocation or unusable input path; exits with code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string spectra_text(const std::vector<Spectrum>& spectra, Format format) {
  std::ostringstream out;
  write_spectra(out, spectra, format);
  return out.str();
}

std::vector<Spectrum> read_data(const fs::path& path) {
  const Format format = format_from_path(path);
  const std::string text = read_file(path);
  std::istringstream in(text);
  try {
    return read_spectra(in, format);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

RunConfig read_config(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  try {
    return load_config(path);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path.string());
}

std::size_t resolve_threads(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("RAMANMATCH_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError("RAMANMATCH_THREADS must be a positive integer, got '" + std::string(env) +
                     "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Manifests

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) {
    j_["tool"] = "ramanmatch";
    j_["version"] = kVersion;
    j_["checkpoint_format"] = 1;
    j_["compiler"] = __VERSION__;
    j_["command"] = std::move(command);
    j_["arguments"] = args;
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }

  void config(const RunConfig& cfg, const std::string& path) {
    j_["config_path"] = path;
    j_["config_hash"] = hex64(fnv1a(cfg.text));
    j_["config_text"] = cfg.text;
  }
  void input(const fs::path& path, const std::string& content) {
    j_["inputs"].push_back({{"path", path.string()}, {"fnv1a", hex64(fnv1a(content))}});
  }
  void output(const fs::path& path) { j_["outputs"].push_back(path.filename().string()); }
  json& operator[](const char* key) { return j_[key]; }

  void write(const fs::path& path) const { write_atomic(path, j_.dump(2) + "\n"); }

 private:
  json j_;
};

json seeds_of(const ExperimentConfig& ex) {
  return {{"experiment", ex.seed},
          {"train", ex.train.rng_seed},
          {"augment", ex.augment.rng_seed},
          {"shift", ex.shift.rng_seed}};
}

// ---------------------------------------------------------------------------
// Trained models on disk

struct Model {
  RunConfig cfg;
  Grid grid;
  bool normalize = true;
  Ensemble ensemble;
  fs::path dir;
  fs::path library;
};

Model load_model(const fs::path& dir) {
  const fs::path index = dir / "model.json";
  require_file(index, "model index");
  json j;
  try {
    j = json::parse(read_file(index));
  } catch (const json::exception& e) {
    throw std::runtime_error(index.string() + ": " + e.what());
  }
  Model m;
  m.dir = dir;
  try {
    m.cfg = parse_config(j.at("config").get<std::string>(), index.string() + " config");
    m.grid = {j.at("grid").at("min").get<double>(), j.at("grid").at("max").get<double>(),
              j.at("grid").at("length").get<std::size_t>()};
    m.normalize = j.at("normalize").get<bool>();
    m.library = dir / j.at("library").get<std::string>();
    m.ensemble.arch = m.cfg.experiment.arch;
    for (const auto& member : j.at("members")) {
      const fs::path file = dir / member.at("file").get<std::string>();
      require_file(file, "checkpoint");
      auto params = nd::load_checkpoint(file);
      if (params.arch_hash != m.ensemble.arch.hash()) {
        throw std::runtime_error(file.string() + ": checkpoint architecture does not match " +
                                 index.string());
      }
      m.ensemble.member_seeds.push_back(member.at("seed").get<std::uint64_t>());
      m.ensemble.members.push_back(std::move(params));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(index.string() + ": " + e.what());
  }
  if (m.ensemble.members.empty()) throw std::runtime_error(index.string() + ": no members");
  return m;
}

ReferenceLibrary model_library(const Model& m, const fs::path& override_path, Manifest& manifest) {
  const fs::path path = override_path.empty() ? m.library : override_path;
  require_file(path, "library file");
  manifest.input(path, read_file(path));
  auto spectra = read_data(path);
  if (spectra.empty()) throw std::runtime_error(path.string() + ": library is empty");
  ReferenceLibrary lib(prepare(spectra, m.grid, m.normalize));
  lib.build_cache(m.ensemble);
  return lib;
}

std::vector<ResampledSpectrum> model_queries(const Model& m, const fs::path& path,
                                             Manifest& manifest) {
  require_file(path, "spectra file");
  manifest.input(path, read_file(path));
  return prepare(read_data(path), m.grid, m.normalize);
}

std::vector<std::string> labels_of(const std::vector<ResampledSpectrum>& spectra) {
  std::vector<std::string> out;
  for (const auto& s : spectra) out.push_back(s.class_label);
  return out;
}

bool looks_augmented(const ResampledSpectrum& s) {
  return s.source_id.find("~noise") != std::string::npos ||
         s.source_id.find("~mix") != std::string::npos;
}

void check_known_classes(const std::vector<ResampledSpectrum>& spectra,
                         const ReferenceLibrary& lib, const fs::path& path) {
  for (const auto& s : spectra) {
    if (!lib.contains_class(s.class_label)) {
      throw std::runtime_error(path.string() + ": class '" + s.class_label + "' of '" +
                               s.source_id + "' is not in the reference library");
    }
  }
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::size_t threads = 0;
  bool quiet = false;
  std::vector<std::string> args;
};

void log_line(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << std::endl;
}

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& a, const Common& c) {
  auto cfg = read_config(a.config);
  if (!cfg.synthetic) throw UsageError(a.config + ": no [synthetic] section");
  auto spec = *cfg.synthetic;
  if (a.seed) spec.rng_seed = *a.seed;
  const fs::path out = a.out;
  const auto data = generate_synthetic(spec);
  write_atomic(out, spectra_text(data, format_from_path(out)));

  Manifest m("synth", c.args);
  m.config(cfg, a.config);
  m["seeds"] = {{"synthetic", spec.rng_seed}};
  m.output(out);
  m.write(fs::path(out.string() + ".manifest.json"));
  log_line(c, "wrote " + std::to_string(data.size()) + " spectra to " + out.string());
}

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, const Common& c) {
  auto cfg = read_config(a.config);
  auto& ex = cfg.experiment;
  if (a.seed) ex.train.rng_seed = *a.seed;
  require_file(a.data, "data file");
  const std::string raw = read_file(a.data);
  const auto spectra = read_data(a.data);
  if (spectra.empty()) throw std::runtime_error(a.data + ": no spectra");

  auto split = split_by_role(spectra);
  const Grid grid = experiment_grid(ex, split.train.empty() ? spectra : split.train);
  if (split.train.empty()) throw std::runtime_error(a.data + ": no training spectra");
  const auto train = prepare(split.train, grid, ex.normalize);

  TrainingData data;
  data.train = augment_dataset(train, ex.augment);
  data.validation =
      split.validation.empty() ? train : prepare(split.validation, grid, ex.normalize);
  data.grid_step = grid.step();
  data.shift = ex.shift;
  log_line(c, "training " + std::to_string(ex.train.ensemble_size) + " members on " +
                  std::to_string(data.train.size()) + " spectra (" +
                  std::to_string(train.size()) + " before augmentation)");

  const auto result = train_ensemble(data, ex.arch, ex.train, resolve_threads(c.threads));

  const fs::path dir = a.out;
  fs::create_directories(dir);
  Manifest m("train", c.args);
  m.config(cfg, a.config);
  m.input(a.data, raw);

  json index;
  index["format"] = 1;
  index["config"] = cfg.text;
  index["grid"] = {{"min", grid.min}, {"max", grid.max}, {"length", grid.length}};
  index["normalize"] = ex.normalize;
  index["library"] = "library.jsonl";
  index["members"] = json::array();
  std::string log_text;
  for (std::size_t i = 0; i < result.ensemble.size(); ++i) {
    const auto& params = result.ensemble.members[i];
    const std::string file = "member_" + std::to_string(i) + ".ckpt";
    std::ostringstream bytes;
    nd::write_checkpoint(bytes, params);
    write_atomic(dir / file, bytes.str());
    m.output(dir / file);
    const auto& info = result.members[i];
    index["members"].push_back({{"file", file},
                                {"seed", info.seed},
                                {"best_step", info.best_step},
                                {"best_val_accuracy", info.best_val_accuracy},
                                {"checksum", hex64(params.checksum())}});
    for (const auto& rec : info.log) {
      json line = json::parse(to_json_line(rec));
      json tagged = {{"member", i}};
      tagged.update(line);
      log_text += tagged.dump() + "\n";
    }
  }
  write_atomic(dir / "library.jsonl", spectra_text(split.train, Format::jsonl));
  m.output(dir / "library.jsonl");
  write_atomic(dir / "train_log.jsonl", log_text);
  m.output(dir / "train_log.jsonl");
  write_atomic(dir / "model.json", index.dump(2) + "\n");
  m.output(dir / "model.json");

  json seeds = seeds_of(ex);
  seeds["members"] = result.ensemble.member_seeds;
  m["seeds"] = seeds;
  m["arch_hash"] = hex64(ex.arch.hash());
  m.write(dir / "manifest.json");
  log_line(c, "wrote " + std::to_string(result.ensemble.size()) + " checkpoints to " +
                  dir.string());
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string accuracy_table(const AccuracyReport& acc, std::size_t voting_m) {
  std::string t = "queries " + std::to_string(acc.n) + ", voting M " + std::to_string(voting_m) +
                  "\n" + "top-1 " + fixed4(acc.top1) + "  top-3 " + fixed4(acc.top3) +
                  "  top-5 " + fixed4(acc.top5) + "\n\nclass         correct  total  accuracy\n";
  for (const auto& [label, ct] : acc.per_class) {
    std::string row = label;
    row.resize(std::max<std::size_t>(row.size() + 1, 14), ' ');
    const auto correct = std::to_string(ct.first);
    const auto total = std::to_string(ct.second);
    row += std::string(7 - std::min<std::size_t>(7, correct.size()), ' ') + correct;
    row += std::string(7 - std::min<std::size_t>(7, total.size()), ' ') + total;
    row += "  " + fixed4(ct.second ? double(ct.first) / double(ct.second) : 0.0);
    t += row + "\n";
  }
  return t;
}

struct MatchArgs {
  std::string model, library, queries, out, summary;
  std::optional<std::size_t> voting_m;
};

void cmd_match(const MatchArgs& a, const Common& c) {
  const auto model = load_model(a.model);
  Manifest m("match", c.args);
  const auto lib = model_library(model, a.library, m);
  const auto queries = model_queries(model, a.queries, m);
  auto results = score_queries(queries, lib, model.ensemble, resolve_threads(c.threads));

  const VotingConfig voting{a.voting_m.value_or(model.cfg.experiment.voting.M)};
  if (voting.M < 1) throw UsageError("--voting-m must be at least 1");
  std::map<std::string, std::vector<MatchResult>> specimens;
  for (std::size_t i = 0; i < queries.size(); ++i)
    specimens[specimen_of(queries[i].source_id)].push_back(results[i]);
  std::string text;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto r = results[i];
    if (voting.M > 1) r.predicted = classify(r, voting, specimens.at(specimen_of(r.query_id)));
    text += to_json_line(r) + "\n";
  }
  const fs::path out = a.out;
  write_atomic(out, text);
  m.output(out);
  if (!a.summary.empty()) {
    check_known_classes(queries, lib, a.queries);
    const auto acc = accuracy_from_results(queries, results, lib, voting);
    write_atomic(a.summary, accuracy_table(acc, voting.M));
    m.output(a.summary);
  }
  m["model"] = fs::path(a.model).string();
  m["voting_m"] = voting.M;
  m["member_seeds"] = model.ensemble.member_seeds;
  m.write(fs::path(out.string() + ".manifest.json"));
  log_line(c, "matched " + std::to_string(queries.size()) + " spectra against " +
                  std::to_string(lib.size()) + " references");
}

struct EvaluateArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
};

void cmd_evaluate(const EvaluateArgs& a, const Common& c) {
  auto cfg = read_config(a.config);
  if (a.seed) cfg.experiment.seed = *a.seed;
  const fs::path dir = a.out;
  Manifest m("evaluate", c.args);
  m.config(cfg, a.config);

  std::vector<Spectrum> data;
  if (!a.data.empty()) {
    require_file(a.data, "data file");
    m.input(a.data, read_file(a.data));
    data = read_data(a.data);
  } else if (cfg.synthetic) {
    data = generate_synthetic(*cfg.synthetic);
    const std::string text = spectra_text(data, Format::jsonl);
    write_atomic(dir / "data.jsonl", text);
    m.output(dir / "data.jsonl");
    m["synthetic_data_fnv1a"] = hex64(fnv1a(text));
  } else {
    throw UsageError("evaluate needs --data or a [synthetic] section in " + a.config);
  }

  RunOptions opts;
  opts.threads = resolve_threads(c.threads);
  if (!c.quiet) opts.progress = [](const std::string& s) { std::cerr << s << std::endl; };
  const auto report = run_experiment(cfg.experiment, data, cfg.text, opts);

  std::string matches;
  for (const auto& s : report.splits) {
    for (const auto& line : s.match_records) {
      json tagged = {{"split", s.index}};
      tagged.update(json::parse(line));
      matches += tagged.dump() + "\n";
    }
  }
  write_atomic(dir / "report.txt", report.to_text());
  write_atomic(dir / "records.jsonl", report.to_records());
  write_atomic(dir / "matches.jsonl", matches);
  for (const char* f : {"report.txt", "records.jsonl", "matches.jsonl"}) m.output(dir / f);
  json seeds = seeds_of(cfg.experiment);
  if (cfg.synthetic) seeds["synthetic"] = cfg.synthetic->rng_seed;
  json splits = json::array();
  for (const auto& s : report.splits) splits.push_back(s.split_seed);
  seeds["splits"] = splits;
  m["seeds"] = seeds;
  m["arch_hash"] = hex64(cfg.experiment.arch.hash());
  m.write(dir / "manifest.json");
  log_line(c, "wrote report to " + (dir / "report.txt").string());
}

struct CalibrateArgs {
  std::string model, validation, library, out, sets;
  double alpha = 0.1;
  double check_fraction = 0.2;
  std::optional<std::uint64_t> seed;
};

void cmd_calibrate(const CalibrateArgs& a, const Common& c) {
  if (!(a.check_fraction >= 0.0 && a.check_fraction < 1.0)) {
    throw UsageError("--check-fraction must be in [0, 1)");
  }
  const auto model = load_model(a.model);
  Manifest m("calibrate", c.args);
  const auto lib = model_library(model, a.library, m);
  const auto val = model_queries(model, a.validation, m);
  if (val.empty()) throw std::runtime_error(a.validation + ": no spectra");
  const bool augmented = std::any_of(val.begin(), val.end(), looks_augmented);
  check_known_classes(val, lib, a.validation);
  const auto results = score_queries(val, lib, model.ensemble, resolve_threads(c.threads));

  const std::uint64_t seed = a.seed.value_or(model.cfg.experiment.seed);
  std::vector<std::size_t> order(val.size());
  std::iota(order.begin(), order.end(), 0);
  nd::Rng rng(mix_seed(seed, 7));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_check = static_cast<std::size_t>(a.check_fraction * double(val.size()));
  if (n_check >= val.size()) throw UsageError("--check-fraction leaves no calibration data");

  std::vector<MatchResult> cal_r, check_r;
  std::vector<std::string> cal_t, check_t;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    (k < n_check ? check_r : cal_r).push_back(results[i]);
    (k < n_check ? check_t : cal_t).push_back(val[i].class_label);
  }
  const auto cal = calibrate(cal_r, cal_t, a.alpha, augmented);

  json out;
  out["alpha"] = cal.alpha;
  out["tau"] = std::isfinite(cal.tau) ? json(cal.tau) : json(nullptr);
  out["n"] = cal.calibration_size;
  out["degenerate"] = cal.degenerate;
  out["check_n"] = n_check;
  std::vector<PredictionSet> sets;
  for (const auto& r : check_r) sets.push_back(predict_set(r, cal));
  if (!a.sets.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < sets.size(); ++i)
      lines += to_json_line(sets[i], check_r[i].query_id) + "\n";
    write_atomic(a.sets, lines);
    m.output(a.sets);
  }
  if (n_check > 0) {
    out["check_coverage"] = empirical_coverage(sets, check_t);
    out["check_average_set_size"] = average_set_size(sets);
  } else {
    out["check_coverage"] = nullptr;
    out["check_average_set_size"] = nullptr;
  }
  out["calibration_scores"] = cal.calibration_scores;
  const fs::path path = a.out;
  write_atomic(path, out.dump() + "\n");
  m.output(path);
  m["model"] = fs::path(a.model).string();
  m["seeds"] = {{"check_split", seed}};
  m.write(fs::path(path.string() + ".manifest.json"));
  log_line(c, "tau = " + (std::isfinite(cal.tau) ? std::to_string(cal.tau) : "-inf") +
                  " from " + std::to_string(cal.calibration_size) + " spectra");
}

struct CurveArgs {
  std::string model, cal, test, library, out;
  std::vector<double> alphas;
};

void cmd_curve(const CurveArgs& a, const Common& c) {
  const auto model = load_model(a.model);
  Manifest m("curve", c.args);
  const auto lib = model_library(model, a.library, m);
  const auto cal = model_queries(model, a.cal, m);
  const auto test = model_queries(model, a.test, m);
  check_known_classes(cal, lib, a.cal);
  check_known_classes(test, lib, a.test);
  if (std::any_of(cal.begin(), cal.end(), looks_augmented)) {
    throw CalibrationError(a.cal + ": calibration spectra are augmented");
  }
  if (cal.empty() || test.empty()) throw std::runtime_error("curve needs calibration and test spectra");
  const auto threads = resolve_threads(c.threads);
  const auto cal_r = score_queries(cal, lib, model.ensemble, threads);
  const auto test_r = score_queries(test, lib, model.ensemble, threads);
  const auto alphas = a.alphas.empty() ? model.cfg.experiment.alpha_grid : a.alphas;
  for (double alpha : alphas) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alphas must lie in (0, 1)");
  }
  const auto rows = coverage_size_curve(cal_r, labels_of(cal), test_r, labels_of(test), alphas);
  std::string text;
  for (const auto& r : rows) {
    json j;
    j["alpha"] = r.alpha;
    j["theoretical_coverage"] = r.theoretical_coverage;
    j["empirical_coverage"] = r.empirical_coverage;
    j["average_set_size"] = r.average_set_size;
    j["tau"] = std::isfinite(r.tau) ? json(r.tau) : json(nullptr);
    text += j.dump() + "\n";
  }
  const fs::path path = a.out;
  write_atomic(path, text);
  m.output(path);
  m["model"] = fs::path(a.model).string();
  m.write(fs::path(path.string() + ".manifest.json"));
}

struct ReportArgs {
  std::string run, out;
};

void cmd_report(const ReportArgs& a, const Common&) {
  const fs::path records = fs::path(a.run) / "records.jsonl";
  require_file(records, "experiment records");
  std::istringstream in(read_file(records));
  std::ostringstream o;
  std::string line;
  std::size_t n = 0;
  o << "method            top-1 mean   95% half-width   splits\n";
  std::string curve;
  while (std::getline(in, line)) {
    ++n;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(records.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    const auto kind = j.value("record", "");
    char buf[160];
    if (kind == "summary") {
      const auto& hw = j.at("top1_ci_half_width");
      char half[32] = "n/a";
      if (!hw.is_null()) std::snprintf(half, sizeof half, "%.4f", hw.get<double>());
      std::snprintf(buf, sizeof buf, "%-18s%-13.4f%-17s%zu\n",
                    j.at("method").get<std::string>().c_str(), j.at("top1_mean").get<double>(),
                    half, j.at("splits").get<std::size_t>());
      o << buf;
    } else if (kind == "curve") {
      std::snprintf(buf, sizeof buf, "  split %zu  alpha %-6g coverage %.4f (target %.4f)  size %.4f\n",
                    j.at("split").get<std::size_t>(), j.at("alpha").get<double>(),
                    j.at("empirical_coverage").get<double>(),
                    j.at("theoretical_coverage").get<double>(),
                    j.at("average_set_size").get<double>());
      curve += buf;
    }
  }
  if (!curve.empty()) o << "\ncoverage and set size:\n" << curve;
  if (a.out.empty()) {
    std::cout << o.str();
  } else {
    write_atomic(a.out, o.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese spectrum matching with conformal prediction sets", "ramanmatch"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;
  for (int i = 0; i < argc; ++i) common.args.emplace_back(argv[i]);
  app.add_option("--threads", common.threads,
                 "Worker cap (default: RAMANMATCH_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", common.quiet, "No progress messages");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("-c,--config", synth.config, "Config with a [synthetic] section")->required();
  s->add_option("-o,--out", synth.out, "Output .csv or .jsonl")->required();
  s->add_option("--seed", synth.seed, "Override the synthetic seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train an ensemble and write checkpoints");
  t->add_option("-c,--config", train.config, "Config file")->required();
  t->add_option("-d,--data", train.data, "Spectra; role=test rows are left out")->required();
  t->add_option("-o,--out", train.out, "Model directory")->required();
  t->add_option("--seed", train.seed, "Override [train] seed");

  MatchArgs match;
  auto* mt = app.add_subcommand("match", "Rank library classes for query spectra");
  mt->add_option("-m,--model", match.model, "Model directory from train")->required();
  mt->add_option("-l,--library", match.library, "Reference spectra (default: the model's)");
  mt->add_option("-q,--queries", match.queries, "Query spectra")->required();
  mt->add_option("-o,--out", match.out, "Output .jsonl")->required();
  mt->add_option("--voting-m", match.voting_m, "Top-M voting across scans of a specimen");
  mt->add_option("--summary", match.summary,
                 "Write an accuracy table; queries must carry library class labels");

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Run the cross-validation experiment");
  e->add_option("-c,--config", evaluate.config, "Config file")->required();
  e->add_option("-d,--data", evaluate.data, "Spectra (default: the [synthetic] section)");
  e->add_option("-o,--out", evaluate.out, "Output directory")->required();
  e->add_option("--seed", evaluate.seed, "Override [experiment] seed");

  CalibrateArgs calib;
  auto* cb = app.add_subcommand("calibrate", "Fit a conformal threshold");
  cb->add_option("-m,--model", calib.model, "Model directory")->required();
  cb->add_option("-v,--validation", calib.validation, "Held-out labelled spectra")->required();
  cb->add_option("-a,--alpha", calib.alpha, "Miscoverage level")
      ->check(CLI::Range(0.0, 1.0))
      ->required();
  cb->add_option("-l,--library", calib.library, "Reference spectra (default: the model's)");
  cb->add_option("--check-fraction", calib.check_fraction,
                 "Share of validation spectra held back to check coverage");
  cb->add_option("--seed", calib.seed, "Seed of the calibration/check split");
  cb->add_option("--sets", calib.sets, "Write prediction sets of the check spectra (.jsonl)");
  cb->add_option("-o,--out", calib.out, "Output .json")->required();

  CurveArgs curve;
  auto* cv = app.add_subcommand("curve", "Coverage and set size over several alphas");
  cv->add_option("-m,--model", curve.model, "Model directory")->required();
  cv->add_option("--cal", curve.cal, "Calibration spectra")->required();
  cv->add_option("--test", curve.test, "Test spectra")->required();
  cv->add_option("--alphas", curve.alphas, "Comma-separated alphas")->delimiter(',');
  cv->add_option("-l,--library", curve.library, "Reference spectra (default: the model's)");
  cv->add_option("-o,--out", curve.out, "Output .jsonl")->required();

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Summarize an evaluate output directory");
  r->add_option("run", report.run, "Directory written by evaluate")->required();
  r->add_option("-o,--out", report.out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*s) cmd_synth(synth, common);
    if (*t) cmd_train(train, common);
    if (*mt) cmd_match(match, common);
    if (*e) cmd_evaluate(evaluate, common);
    if (*cb) cmd_calibrate(calib, common);
    if (*cv) cmd_curve(curve, common);
    if (*r) cmd_report(report, common);
  } catch (const UsageError& err) {
    std::cerr << "ramanmatch: " << err.what() << "\n";
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "ramanmatch: " << err.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
