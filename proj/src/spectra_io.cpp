// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/spectra_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace ramanmatch {

namespace {

constexpr std::string_view kCsvHeader =
    "source_id,class_label,role,wavenumbers,intensities";

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

double parse_number(std::string_view s, std::size_t line) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw SpectrumError(line_error(line, "bad number '" + std::string(s) + "'"));
  }
  return v;
}

std::vector<double> parse_list(std::string_view s, std::size_t line) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(';', start);
    out.push_back(parse_number(s.substr(start, pos - start), line));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Splits one CSV record; double-quoted fields may contain commas.
std::vector<std::string> split_csv(std::string_view line, std::size_t lineno) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw SpectrumError(line_error(lineno, "unterminated quote"));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    append_number(out, v[i]);
  }
  return out;
}

void validate_at(const Spectrum& s, std::size_t line) {
  try {
    validate(s);
  } catch (const SpectrumError& e) {
    throw SpectrumError(line_error(line, e.what()));
  }
}

std::vector<Spectrum> read_csv(std::istream& in) {
  std::vector<Spectrum> out;
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != kCsvHeader) {
        throw SpectrumError(line_error(
            lineno, "expected header '" + std::string(kCsvHeader) + "'"));
      }
      seen_header = true;
      continue;
    }
    auto fields = split_csv(line, lineno);
    if (fields.size() != 5) {
      throw SpectrumError(line_error(
          lineno, "expected 5 fields, got " + std::to_string(fields.size())));
    }
    Spectrum s;
    s.source_id = fields[0];
    s.class_label = fields[1];
    try {
      s.role = role_from_string(fields[2]);
    } catch (const SpectrumError& e) {
      throw SpectrumError(line_error(lineno, e.what()));
    }
    s.wavenumbers = parse_list(fields[3], lineno);
    s.intensities = parse_list(fields[4], lineno);
    validate_at(s, lineno);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Spectrum> read_jsonl(std::istream& in) {
  std::vector<Spectrum> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SpectrumError(line_error(lineno, e.what()));
    }
    Spectrum s;
    try {
      s.source_id = j.at("source_id").get<std::string>();
      s.class_label = j.at("class_label").get<std::string>();
      s.role = role_from_string(j.at("role").get<std::string>());
      s.wavenumbers = j.at("wavenumbers").get<std::vector<double>>();
      s.intensities = j.at("intensities").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw SpectrumError(line_error(lineno, e.what()));
    } catch (const SpectrumError& e) {
      throw SpectrumError(line_error(lineno, e.what()));
    }
    validate_at(s, lineno);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::reference: return "reference";
    case Role::train: return "train";
    case Role::validation: return "validation";
    case Role::test: return "test";
  }
  return "train";
}

Role role_from_string(std::string_view s) {
  if (s == "reference") return Role::reference;
  if (s == "train") return Role::train;
  if (s == "validation") return Role::validation;
  if (s == "test") return Role::test;
  throw SpectrumError("unknown role '" + std::string(s) + "'");
}

Format format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return Format::csv;
  if (ext == ".jsonl" || ext == ".json") return Format::jsonl;
  throw SpectrumError("cannot infer format from extension of " + path.string());
}

void validate(const Spectrum& s) {
  const std::string who = "spectrum '" + s.source_id + "': ";
  if (s.wavenumbers.size() != s.intensities.size()) {
    throw SpectrumError(who + "wavenumbers and intensities differ in length");
  }
  if (s.wavenumbers.size() < 2) {
    throw SpectrumError(who + "needs at least two points");
  }
  for (std::size_t i = 0; i < s.wavenumbers.size(); ++i) {
    if (!std::isfinite(s.wavenumbers[i])) {
      throw SpectrumError(who + "non-finite wavenumber at index " + std::to_string(i));
    }
    if (!std::isfinite(s.intensities[i])) {
      throw SpectrumError(who + "non-finite intensity at index " + std::to_string(i));
    }
    if (i > 0 && !(s.wavenumbers[i] > s.wavenumbers[i - 1])) {
      throw SpectrumError(who + "wavenumbers not strictly increasing at index " +
                          std::to_string(i));
    }
  }
}

std::vector<Spectrum> read_spectra(std::istream& in, Format format) {
  return format == Format::csv ? read_csv(in) : read_jsonl(in);
}

std::vector<Spectrum> load_spectra(const std::filesystem::path& path,
                                   Format format) {
  std::ifstream in(path);
  if (!in) throw SpectrumError("cannot open " + path.string());
  try {
    return read_spectra(in, format);
  } catch (const SpectrumError& e) {
    throw SpectrumError(path.string() + ": " + e.what());
  }
}

void write_spectra(std::ostream& out, const std::vector<Spectrum>& spectra,
                   Format format) {
  if (format == Format::csv) {
    out << kCsvHeader << '\n';
    for (const auto& s : spectra) {
      out << csv_field(s.source_id) << ',' << csv_field(s.class_label) << ','
          << to_string(s.role) << ',' << join_numbers(s.wavenumbers) << ','
          << join_numbers(s.intensities) << '\n';
    }
    return;
  }
  for (const auto& s : spectra) {
    // Built by hand so numbers use the shortest round-trip form.
    std::string line = "{\"source_id\":" + nlohmann::json(s.source_id).dump() +
                       ",\"class_label\":" + nlohmann::json(s.class_label).dump() +
                       ",\"role\":\"" + std::string(to_string(s.role)) +
                       "\",\"wavenumbers\":[";
    for (std::size_t i = 0; i < s.wavenumbers.size(); ++i) {
      if (i) line += ',';
      append_number(line, s.wavenumbers[i]);
    }
    line += "],\"intensities\":[";
    for (std::size_t i = 0; i < s.intensities.size(); ++i) {
      if (i) line += ',';
      append_number(line, s.intensities[i]);
    }
    line += "]}";
    out << line << '\n';
  }
}

void save_spectra(const std::filesystem::path& path,
                  const std::vector<Spectrum>& spectra, Format format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SpectrumError("cannot write " + path.string());
  write_spectra(out, spectra, format);
}

std::vector<double> Grid::points() const {
  std::vector<double> p(length);
  const double h = step();
  for (std::size_t i = 0; i < length; ++i) p[i] = min + h * static_cast<double>(i);
  if (length > 0) p.back() = max;
  return p;
}

ResampledSpectrum resample_to_grid(const Spectrum& s, const Grid& grid) {
  if (grid.length < 2) throw SpectrumError("grid needs at least two points");
  if (!(grid.max > grid.min)) throw SpectrumError("grid max must exceed min");
  const auto& x = s.wavenumbers;
  const auto& y = s.intensities;
  if (x.size() < 2 || x.size() != y.size()) validate(s);
  if (grid.max < x.front() || grid.min > x.back()) {
    throw SpectrumError("spectrum '" + s.source_id + "': measured range [" +
                        std::to_string(x.front()) + ", " +
                        std::to_string(x.back()) +
                        "] does not overlap the requested grid");
  }

  ResampledSpectrum out;
  out.class_label = s.class_label;
  out.source_id = s.source_id;
  out.intensities.resize(grid.length);
  std::size_t edge = 0;
  const auto points = grid.points();
  for (std::size_t i = 0; i < grid.length; ++i) {
    const double g = points[i];
    if (g <= x.front()) {
      out.intensities[i] = y.front();
      if (g < x.front()) ++edge;
    } else if (g >= x.back()) {
      out.intensities[i] = y.back();
      if (g > x.back()) ++edge;
    } else {
      const auto hi = static_cast<std::size_t>(
          std::upper_bound(x.begin(), x.end(), g) - x.begin());
      const std::size_t lo = hi - 1;
      const double f = (g - x[lo]) / (x[hi] - x[lo]);
      out.intensities[i] = y[lo] + (y[hi] - y[lo]) * f;
    }
  }
  out.mostly_edge_filled = static_cast<double>(edge) > 0.2 * grid.length;
  return out;
}

Grid common_grid(const std::vector<Spectrum>& spectra, std::size_t length) {
  if (spectra.empty()) throw SpectrumError("no spectra to derive a grid from");
  Grid g{-INFINITY, INFINITY, length};
  for (const auto& s : spectra) {
    g.min = std::max(g.min, s.wavenumbers.front());
    g.max = std::min(g.max, s.wavenumbers.back());
  }
  if (!(g.max > g.min)) {
    throw SpectrumError("wavenumber ranges of the spectra do not intersect");
  }
  return g;
}

void min_max_normalize(ResampledSpectrum& s) {
  if (s.intensities.empty()) return;
  const auto [lo, hi] = std::minmax_element(s.intensities.begin(), s.intensities.end());
  const double a = *lo;
  const double range = *hi - *lo;
  for (double& v : s.intensities) v = range > 0.0 ? (v - a) / range : 0.0;
}

namespace {

// class label -> indices into `spectra`, labels sorted.
std::map<std::string, std::vector<std::size_t>> by_class(
    const std::vector<Spectrum>& spectra) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    groups[spectra[i].class_label].push_back(i);
  }
  return groups;
}

}  // namespace

DatasetSplit make_test_split(const std::vector<Spectrum>& spectra,
                             std::uint64_t seed) {
  DatasetSplit split;
  split.split_seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<bool> to_test(spectra.size(), false);
  for (const auto& [label, idx] : by_class(spectra)) {
    if (idx.size() < 2) {
      split.excluded_classes.push_back(label);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    to_test[idx[pick(rng)]] = true;
  }
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    (to_test[i] ? split.test : split.train).push_back(spectra[i]);
  }
  return split;
}

void hold_out_validation(DatasetSplit& split, std::uint64_t seed,
                         std::size_t min_train_remaining) {
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::vector<bool> to_val(split.train.size(), false);
  for (const auto& [label, idx] : by_class(split.train)) {
    if (idx.size() < min_train_remaining + 1) continue;
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    to_val[idx[pick(rng)]] = true;
  }
  std::vector<Spectrum> keep;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (to_val[i]) {
      split.validation.push_back(std::move(split.train[i]));
    } else {
      keep.push_back(std::move(split.train[i]));
    }
  }
  split.train = std::move(keep);
}

DatasetSplit split_by_role(const std::vector<Spectrum>& spectra) {
  DatasetSplit split;
  for (const auto& s : spectra) {
    switch (s.role) {
      case Role::test: split.test.push_back(s); break;
      case Role::validation: split.validation.push_back(s); break;
      default: split.train.push_back(s); break;
    }
  }
  return split;
}

}  // namespace ramanmatch
