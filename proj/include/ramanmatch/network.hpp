// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ramanmatch/ndcore.hpp"
#include "ramanmatch/spectra_io.hpp"

namespace ramanmatch {

/// Shape of the representation network and similarity head.
///
/// The layout is fixed: two conventional conv blocks (conv, batch norm,
/// LeakyReLU, twice each), one max pool, then two Xception blocks of
/// separable convolutions with a projected residual shortcut, each ending in
/// dropout. Only the sizes below are configurable.
struct ArchitectureConfig {
  std::array<std::size_t, 2> conv_block_channels{32, 64};
  std::size_t conv_kernel = 9;
  std::size_t pool_window = 4;
  std::array<std::size_t, 2> xception_channels{96, 128};
  std::size_t depthwise_kernel = 9;
  std::size_t separable_per_block = 3;
  double leaky_slope = 0.01;
  double dropout_rate = 0.5;
  std::size_t input_length = 1024;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  std::size_t feature_channels() const { return xception_channels[1]; }
  std::size_t feature_width() const { return input_length / pool_window; }

  /// `key = value` lines in a fixed order; hashed for checkpoint checks.
  std::string to_text() const;
  std::uint64_t hash() const;
};

bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b);

struct SimilarityScore {
  double p = 0.5;
  double logit = 0.0;
};

struct DistanceMaps {
  nd::Var prod;  // F1 * F2
  nd::Var diff;  // |F1 - F2|
};

/// Elementwise product and absolute difference of two feature maps.
DistanceMaps distance_maps(nd::Var f1, nd::Var f2);

/// Binds ParameterSet entries onto a tape, once per name, so that every use
/// of a weight within one graph shares a node.
class ParameterBinding {
 public:
  /// Trainable binding: gradients flow into `params`, batch norm may update
  /// its running statistics.
  ParameterBinding(nd::Tape& tape, nd::ParameterSet& params);
  /// Read-only binding for inference.
  ParameterBinding(nd::Tape& tape, const nd::ParameterSet& params);

  nd::Tape& tape() { return tape_; }
  nd::Var operator()(const std::string& name);
  nd::BatchNormBuffers norm_buffers(const std::string& prefix);

 private:
  nd::Tape& tape_;
  nd::ParameterSet* mutable_ = nullptr;
  const nd::ParameterSet* params_ = nullptr;
  std::map<std::string, nd::Var, std::less<>> bound_;
};

class SiameseNetwork {
 public:
  explicit SiameseNetwork(ArchitectureConfig cfg);

  const ArchitectureConfig& config() const { return cfg_; }

  /// Kaiming-style fan-in initialization for the LeakyReLU slope; zero
  /// biases; unit batch-norm scale.
  nd::ParameterSet init_parameters(std::uint64_t seed) const;

  /// x: (n, 1, input_length) -> (n, feature_channels, feature_width).
  /// `dropout_rng` is required in train mode only.
  nd::Var represent(ParameterBinding& params, nd::Var x, nd::Mode mode,
                    nd::Rng* dropout_rng) const;

  /// Concatenates the maps along width, mixes channels down to one with a
  /// 1x1 conv, then a linear layer gives one logit per pair: (n, 1, 1).
  nd::Var similarity_logit(ParameterBinding& params, const DistanceMaps& d) const;

  /// Scores for every (a[i], b[i]) pair, both branches sharing weights.
  /// Returns the logits; apply nd::sigmoid for probabilities.
  nd::Var siamese_logits(ParameterBinding& params, nd::Var a, nd::Var b,
                         nd::Mode mode, nd::Rng* dropout_rng) const;

  // Inference helpers (eval mode, read-only parameters).
  nd::Tensor features(const nd::ParameterSet& params, const nd::Tensor& x) const;
  std::vector<SimilarityScore> head_scores(const nd::ParameterSet& params,
                                           const nd::Tensor& f1,
                                           const nd::Tensor& f2) const;
  std::vector<SimilarityScore> siamese_scores(const nd::ParameterSet& params,
                                              const nd::Tensor& a,
                                              const nd::Tensor& b) const;

 private:
  nd::Var conv_block(ParameterBinding& p, nd::Var x, std::size_t block,
                     nd::Mode mode) const;
  nd::Var xception_block(ParameterBinding& p, nd::Var x, std::size_t block,
                         nd::Mode mode, nd::Rng* dropout_rng) const;

  ArchitectureConfig cfg_;
};

/// Stacks spectra into an (n, 1, L) input batch.
nd::Tensor to_batch(std::span<const ResampledSpectrum> spectra);
nd::Tensor to_batch(std::span<const ResampledSpectrum* const> spectra);

SimilarityScore score_from_logit(double logit);

}  // namespace ramanmatch
