// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ramanmatch/config.hpp"

using namespace ramanmatch;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text, "t.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config keys map onto the experiment") {
  const auto cfg = parse_config(R"(
# comment
[arch]
conv_channels = 4, 8
input_length = 64
dropout_rate = 0.25

[train]
lr0 = 1e-3
seed = 42
ensemble_size = 3

[shift]
negative_shift_mean = 120

[experiment]
voting_candidates = 1, 3
conformal_alpha = 0.1
alpha_grid = 0.2,0.1
normalize = false
grid_min = 100
grid_max = 900
)");
  const auto& ex = cfg.experiment;
  CHECK(ex.arch.conv_block_channels == std::array<std::size_t, 2>{4, 8});
  CHECK(ex.arch.input_length == 64);
  CHECK(ex.arch.dropout_rate == 0.25);
  CHECK(ex.arch.xception_channels == ArchitectureConfig{}.xception_channels);
  CHECK(ex.train.lr0 == 1e-3);
  CHECK(ex.train.rng_seed == 42);
  CHECK(ex.train.ensemble_size == 3);
  CHECK(ex.train.total_steps == 2000);
  CHECK(ex.shift.negative_shift_mean == 120.0);
  CHECK(ex.voting_candidates == std::vector<std::size_t>{1, 3});
  CHECK(ex.conformal_alpha == 0.1);
  CHECK(ex.alpha_grid == std::vector<double>{0.2, 0.1});
  CHECK_FALSE(ex.normalize);
  REQUIRE(ex.grid);
  CHECK(ex.grid->min == 100.0);
  CHECK(ex.grid->length == 64);
  CHECK_FALSE(cfg.synthetic);
}

TEST_CASE("empty config keeps every default") {
  const auto cfg = parse_config("");
  CHECK(cfg.experiment.arch == ArchitectureConfig{});
  CHECK(cfg.experiment.n_test_splits == 4);
  CHECK_FALSE(cfg.experiment.conformal_alpha);
  CHECK(cfg.experiment.alpha_grid == std::vector<double>{0.5, 0.2, 0.1, 0.05, 0.02, 0.01});
  CHECK(parse_config("[synthetic]\nseed = 1\n").synthetic.has_value());
}

TEST_CASE("config errors name the offending key") {
  CHECK(error_of("[train]\nlr = 1\n").find("unknown key 'lr' in [train]") != std::string::npos);
  CHECK(error_of("[trian]\nlr0 = 1\n").find("unknown section [trian]") != std::string::npos);
  CHECK(error_of("lr0 = 1\n").find("inside a [section]") != std::string::npos);
  CHECK(error_of("[train]\nlr0 = fast\n").find("[train] lr0") != std::string::npos);
  CHECK(error_of("[train]\nbatch_size = 3.5\n").find("batch_size") != std::string::npos);
  CHECK(error_of("[arch]\nconv_channels = 4\n").find("two comma-separated") != std::string::npos);
  CHECK(error_of("[experiment]\ngrid_min = 1\n").find("together") != std::string::npos);
  CHECK(error_of("[experiment]\nn_test_splits = 0\n").find("n_test_splits") != std::string::npos);
  CHECK(error_of("[train]\nlr0 = 1\nlr0 = 2\n").find("t.ini:") != std::string::npos);
  CHECK(error_of("[experiment]\nnormalize = maybe\n").find("normalize") != std::string::npos);
}

TEST_CASE("missing config file") {
  try {
    load_config("/nonexistent/dir/x.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/x.ini") != std::string::npos);
  }
}

TEST_CASE("bundled configs parse") {
  const std::string dir = RAMANMATCH_CONFIG_DIR;
  const auto reference = load_config(dir + "/reference.ini");
  CHECK(reference.experiment.arch == ArchitectureConfig{});
  CHECK(reference.experiment.train.lr0 == TrainConfig{}.lr0);
  REQUIRE(reference.synthetic);
  CHECK(reference.synthetic->baseline_scale == SyntheticDatasetSpec{}.baseline_scale);

  for (const char* name : {"synthetic.ini", "smoke.ini"}) {
    const auto cfg = load_config(dir + "/" + name);
    REQUIRE(cfg.synthetic);
    CHECK(cfg.synthetic->grid.length == cfg.experiment.arch.input_length);
  }
}
