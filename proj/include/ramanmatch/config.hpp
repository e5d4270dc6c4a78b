// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ramanmatch/harness.hpp"

namespace ramanmatch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a config file can describe.
struct RunConfig {
  ExperimentConfig experiment;
  std::optional<SyntheticDatasetSpec> synthetic;  // present when [synthetic] is
  std::string text;                               // the file as read
};

/// INI-style `key = value` lines under [arch], [train], [augment], [shift],
/// [experiment] and [synthetic]. Lists are comma separated; '#' and ';'
/// start comment lines. Unknown sections or keys are errors. Omitted keys
/// keep their defaults. `origin` names the source in error messages.
RunConfig parse_config(std::string_view text, const std::string& origin = "config");

/// Throws ConfigError naming `path` when it cannot be read or parsed.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace ramanmatch
