// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace ramanmatch {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw std::invalid_argument("'" + s + "' is not a valid number");
  }
  return value;
}

bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("'" + s + "' is not true or false");
}

template <class T>
std::vector<T> parse_list(const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(item));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

using Setter = std::function<void(const std::string&)>;
using Section = std::map<std::string, Setter>;

template <class T>
Setter number(T& target) {
  return [&target](const std::string& v) { target = parse_number<T>(v); };
}

Setter pair_of(std::array<std::size_t, 2>& target) {
  return [&target](const std::string& v) {
    const auto list = parse_list<std::size_t>(v);
    if (list.size() != 2) throw std::invalid_argument("expected two comma-separated values");
    target = {list[0], list[1]};
  };
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg;
  cfg.text = std::string(text);
  auto& ex = cfg.experiment;
  SyntheticDatasetSpec synth;
  std::optional<double> grid_min, grid_max;
  bool has_synthetic = false;

  std::map<std::string, Section> sections;
  sections["arch"] = {
      {"conv_channels", pair_of(ex.arch.conv_block_channels)},
      {"conv_kernel", number(ex.arch.conv_kernel)},
      {"pool_window", number(ex.arch.pool_window)},
      {"xception_channels", pair_of(ex.arch.xception_channels)},
      {"depthwise_kernel", number(ex.arch.depthwise_kernel)},
      {"separable_per_block", number(ex.arch.separable_per_block)},
      {"leaky_slope", number(ex.arch.leaky_slope)},
      {"dropout_rate", number(ex.arch.dropout_rate)},
      {"input_length", number(ex.arch.input_length)},
      {"bn_momentum", number(ex.arch.bn_momentum)},
      {"bn_eps", number(ex.arch.bn_eps)},
  };
  sections["train"] = {
      {"beta", number(ex.train.beta)},
      {"lambda", number(ex.train.lambda)},
      {"lr0", number(ex.train.lr0)},
      {"total_steps", number(ex.train.total_steps)},
      {"batch_size", number(ex.train.batch_size)},
      {"ensemble_size", number(ex.train.ensemble_size)},
      {"seed", number(ex.train.rng_seed)},
      {"validation_every", number(ex.train.validation_every)},
      {"validation_pairs", number(ex.train.validation_pairs)},
  };
  sections["augment"] = {
      {"K", number(ex.augment.K)},
      {"kappa", number(ex.augment.kappa)},
      {"seed", number(ex.augment.rng_seed)},
      {"min_class_size", number(ex.augment.min_class_size)},
  };
  sections["shift"] = {
      {"positive_shift", number(ex.shift.positive_shift)},
      {"negative_shift_mean", number(ex.shift.negative_shift_mean)},
      {"negative_shift_std", number(ex.shift.negative_shift_std)},
      {"seed", number(ex.shift.rng_seed)},
  };
  sections["experiment"] = {
      {"n_test_splits", number(ex.n_test_splits)},
      {"voting_m", number(ex.voting.M)},
      {"voting_candidates",
       [&](const std::string& v) { ex.voting_candidates = parse_list<std::size_t>(v); }},
      {"conformal_alpha",
       [&](const std::string& v) {
         if (trim(v) == "none") {
           ex.conformal_alpha.reset();
         } else {
           ex.conformal_alpha = parse_number<double>(v);
         }
       }},
      {"alpha_grid", [&](const std::string& v) { ex.alpha_grid = parse_list<double>(v); }},
      {"normalize", [&](const std::string& v) { ex.normalize = parse_bool(v); }},
      {"seed", number(ex.seed)},
      {"grid_min", [&](const std::string& v) { grid_min = parse_number<double>(v); }},
      {"grid_max", [&](const std::string& v) { grid_max = parse_number<double>(v); }},
  };
  sections["synthetic"] = {
      {"n_classes", number(synth.n_classes)},
      {"spectra_per_class", number(synth.spectra_per_class)},
      {"min_peaks", number(synth.min_peaks)},
      {"max_peaks", number(synth.max_peaks)},
      {"min_peak_width", number(synth.min_peak_width)},
      {"max_peak_width", number(synth.max_peak_width)},
      {"min_peak_separation", number(synth.min_peak_separation)},
      {"noise_sigma", number(synth.noise_sigma)},
      {"baseline_scale", number(synth.baseline_scale)},
      {"grid_min", number(synth.grid.min)},
      {"grid_max", number(synth.grid.max)},
      {"length", number(synth.grid.length)},
      {"seed", number(synth.rng_seed)},
  };

  for (const auto& [name, body] : tree) {
    if (!body.data().empty()) {
      throw ConfigError(origin + ": key '" + name + "' must be inside a [section]");
    }
    auto section = sections.find(name);
    if (section == sections.end()) {
      throw ConfigError(origin + ": unknown section [" + name + "]");
    }
    if (name == "synthetic") has_synthetic = true;
    for (const auto& [key, value] : body) {
      auto setter = section->second.find(key);
      if (setter == section->second.end()) {
        throw ConfigError(origin + ": unknown key '" + key + "' in [" + name + "]");
      }
      try {
        setter->second(value.data());
      } catch (const std::exception& e) {
        throw ConfigError(origin + ": [" + name + "] " + key + ": " + e.what());
      }
    }
  }

  if (grid_min.has_value() != grid_max.has_value()) {
    throw ConfigError(origin + ": [experiment] grid_min and grid_max must be given together");
  }
  if (grid_min) ex.grid = Grid{*grid_min, *grid_max, ex.arch.input_length};
  if (has_synthetic) cfg.synthetic = synth;
  try {
    ex.validate();
    if (cfg.synthetic) cfg.synthetic->validate();
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace ramanmatch
