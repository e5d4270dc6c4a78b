// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/network.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "ramanmatch/hash.hpp"

namespace ramanmatch {

using nd::Mode;
using nd::ParamKind;
using nd::Tensor;
using nd::Var;

namespace {

std::string num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string conv_name(std::size_t block, std::size_t layer) {
  return "conv_block" + std::to_string(block) + ".conv" + std::to_string(layer);
}
std::string conv_bn_name(std::size_t block, std::size_t layer) {
  return "conv_block" + std::to_string(block) + ".bn" + std::to_string(layer);
}
std::string sep_name(std::size_t block, std::size_t layer) {
  return "xception" + std::to_string(block) + ".sep" + std::to_string(layer);
}
std::string sep_bn_name(std::size_t block, std::size_t layer) {
  return "xception" + std::to_string(block) + ".bn" + std::to_string(layer);
}

}  // namespace

void ArchitectureConfig::validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("architecture: " + m);
  };
  for (auto c : conv_block_channels)
    if (c == 0) fail("conv_block_channels must be positive");
  for (auto c : xception_channels)
    if (c == 0) fail("xception_channels must be positive");
  if (conv_kernel % 2 == 0) fail("conv_kernel must be odd");
  if (depthwise_kernel % 2 == 0) fail("depthwise_kernel must be odd");
  if (pool_window < 2) fail("pool_window must be at least 2");
  if (separable_per_block < 1) fail("separable_per_block must be at least 1");
  if (input_length < pool_window) fail("input_length shorter than pool_window");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky_slope must be in (0, 1)");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must be in (0, 1]");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
}

std::string ArchitectureConfig::to_text() const {
  std::ostringstream o;
  o << "conv_block_channels = " << conv_block_channels[0] << ','
    << conv_block_channels[1] << '\n'
    << "conv_kernel = " << conv_kernel << '\n'
    << "pool_window = " << pool_window << '\n'
    << "xception_channels = " << xception_channels[0] << ','
    << xception_channels[1] << '\n'
    << "depthwise_kernel = " << depthwise_kernel << '\n'
    << "separable_per_block = " << separable_per_block << '\n'
    << "leaky_slope = " << num(leaky_slope) << '\n'
    << "dropout_rate = " << num(dropout_rate) << '\n'
    << "input_length = " << input_length << '\n'
    << "bn_momentum = " << num(bn_momentum) << '\n'
    << "bn_eps = " << num(bn_eps) << '\n';
  return o.str();
}

std::uint64_t ArchitectureConfig::hash() const { return fnv1a(to_text()); }

bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b) {
  return a.to_text() == b.to_text();
}

SimilarityScore score_from_logit(double logit) {
  const double p = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                 : std::exp(logit) / (1.0 + std::exp(logit));
  return {p, logit};
}

DistanceMaps distance_maps(Var f1, Var f2) {
  if (!f1.value().same_shape(f2.value())) {
    throw nd::ShapeError("distance_maps: feature maps " +
                         f1.value().shape_string() + " and " +
                         f2.value().shape_string() + " differ");
  }
  return {nd::mul(f1, f2), nd::abs(nd::sub(f1, f2))};
}

// --- ParameterBinding ------------------------------------------------------

ParameterBinding::ParameterBinding(nd::Tape& tape, nd::ParameterSet& params)
    : tape_(tape), mutable_(&params), params_(&params) {}

ParameterBinding::ParameterBinding(nd::Tape& tape, const nd::ParameterSet& params)
    : tape_(tape), params_(&params) {}

Var ParameterBinding::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  Var v = mutable_ ? tape_.parameter(mutable_->at(name))
                   : tape_.frozen(params_->at(name).value);
  bound_.emplace(name, v);
  return v;
}

nd::BatchNormBuffers ParameterBinding::norm_buffers(const std::string& prefix) {
  nd::BatchNormBuffers b;
  b.mean = &params_->at(prefix + ".running_mean").value;
  b.var = &params_->at(prefix + ".running_var").value;
  b.count = &params_->at(prefix + ".num_batches").value;
  if (mutable_) {
    b.mutable_mean = &mutable_->at(prefix + ".running_mean").value;
    b.mutable_var = &mutable_->at(prefix + ".running_var").value;
    b.mutable_count = &mutable_->at(prefix + ".num_batches").value;
  }
  return b;
}

// --- SiameseNetwork --------------------------------------------------------

SiameseNetwork::SiameseNetwork(ArchitectureConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

nd::ParameterSet SiameseNetwork::init_parameters(std::uint64_t seed) const {
  nd::ParameterSet ps;
  ps.init_seed = seed;
  ps.arch_hash = cfg_.hash();
  nd::Rng rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + cfg_.leaky_slope * cfg_.leaky_slope));

  auto kaiming = [&](std::size_t a, std::size_t b, std::size_t c,
                     std::size_t fan_in) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(double(fan_in)));
    Tensor t(a, b, c);
    for (double& v : t.values()) v = normal(rng);
    return t;
  };
  auto add_norm = [&](const std::string& prefix, std::size_t channels) {
    ps.add(prefix + ".gamma", Tensor(1, channels, 1, 1.0), ParamKind::norm_affine);
    ps.add(prefix + ".beta", Tensor(1, channels, 1), ParamKind::norm_affine);
    ps.add(prefix + ".running_mean", Tensor(1, channels, 1), ParamKind::buffer);
    ps.add(prefix + ".running_var", Tensor(1, channels, 1, 1.0), ParamKind::buffer);
    ps.add(prefix + ".num_batches", Tensor(1, 1, 1), ParamKind::buffer);
  };

  std::size_t in = 1;
  const std::size_t k = cfg_.conv_kernel;
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t out = cfg_.conv_block_channels[b];
    for (std::size_t j = 0; j < 2; ++j) {
      ps.add(conv_name(b, j) + ".weight", kaiming(out, in, k, in * k), ParamKind::weight);
      ps.add(conv_name(b, j) + ".bias", Tensor(1, 1, out), ParamKind::bias);
      add_norm(conv_bn_name(b, j), out);
      in = out;
    }
  }
  const std::size_t dk = cfg_.depthwise_kernel;
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t out = cfg_.xception_channels[b];
    const std::string prefix = "xception" + std::to_string(b);
    ps.add(prefix + ".shortcut.weight", kaiming(out, in, 1, in), ParamKind::weight);
    std::size_t c = in;
    for (std::size_t j = 0; j < cfg_.separable_per_block; ++j) {
      ps.add(sep_name(b, j) + ".pointwise", kaiming(out, c, 1, c), ParamKind::weight);
      ps.add(sep_name(b, j) + ".depthwise", kaiming(out, 1, dk, dk), ParamKind::weight);
      add_norm(sep_bn_name(b, j), out);
      c = out;
    }
    in = out;
  }
  const std::size_t head_in = 2 * cfg_.feature_width();
  ps.add("head.conv.weight", kaiming(1, in, 1, in), ParamKind::weight);
  ps.add("head.conv.bias", Tensor(1, 1, 1), ParamKind::bias);
  ps.add("head.linear.weight", kaiming(1, 1, head_in, head_in), ParamKind::weight);
  ps.add("head.linear.bias", Tensor(1, 1, 1), ParamKind::bias);
  return ps;
}

Var SiameseNetwork::conv_block(ParameterBinding& p, Var x, std::size_t block,
                               Mode mode) const {
  const std::size_t pad = (cfg_.conv_kernel - 1) / 2;
  for (std::size_t j = 0; j < 2; ++j) {
    const std::string conv = conv_name(block, j);
    const std::string bn = conv_bn_name(block, j);
    x = nd::conv1d(x, p(conv + ".weight"), p(conv + ".bias"), 1, pad);
    x = nd::batch_norm(x, p(bn + ".gamma"), p(bn + ".beta"), p.norm_buffers(bn),
                       mode, cfg_.bn_momentum, cfg_.bn_eps);
    x = nd::leaky_relu(x, cfg_.leaky_slope);
  }
  return x;
}

Var SiameseNetwork::xception_block(ParameterBinding& p, Var x, std::size_t block,
                                   Mode mode, nd::Rng* dropout_rng) const {
  const std::string prefix = "xception" + std::to_string(block);
  Var shortcut = nd::conv1d(x, p(prefix + ".shortcut.weight"), std::nullopt, 1, 0);
  Var h = x;
  for (std::size_t j = 0; j < cfg_.separable_per_block; ++j) {
    const std::string sep = sep_name(block, j);
    const std::string bn = sep_bn_name(block, j);
    h = nd::separable_conv1d(h, p(sep + ".pointwise"), p(sep + ".depthwise"),
                             cfg_.depthwise_kernel);
    h = nd::batch_norm(h, p(bn + ".gamma"), p(bn + ".beta"), p.norm_buffers(bn),
                       mode, cfg_.bn_momentum, cfg_.bn_eps);
    if (j + 1 < cfg_.separable_per_block) h = nd::leaky_relu(h, cfg_.leaky_slope);
  }
  Var out = nd::leaky_relu(nd::add(h, shortcut), cfg_.leaky_slope);
  if (mode == Mode::train && cfg_.dropout_rate > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("train mode needs a dropout rng");
    out = nd::dropout(out, cfg_.dropout_rate, mode, *dropout_rng);
  }
  return out;
}

Var SiameseNetwork::represent(ParameterBinding& params, Var x, Mode mode,
                              nd::Rng* dropout_rng) const {
  const Tensor& in = x.value();
  if (in.channels() != 1 || in.width() != cfg_.input_length) {
    throw nd::ShapeError("represent: expected input (n, 1, " +
                         std::to_string(cfg_.input_length) + "), got " +
                         in.shape_string());
  }
  Var h = conv_block(params, x, 0, mode);
  h = conv_block(params, h, 1, mode);
  h = nd::max_pool1d(h, cfg_.pool_window, cfg_.pool_window);
  h = xception_block(params, h, 0, mode, dropout_rng);
  h = xception_block(params, h, 1, mode, dropout_rng);
  return h;
}

Var SiameseNetwork::similarity_logit(ParameterBinding& params,
                                     const DistanceMaps& d) const {
  Var joined = nd::concat_width(d.prod, d.diff);
  Var mixed = nd::conv1d(joined, params("head.conv.weight"),
                         params("head.conv.bias"), 1, 0);
  return nd::linear(mixed, params("head.linear.weight"),
                    params("head.linear.bias"));
}

Var SiameseNetwork::siamese_logits(ParameterBinding& params, Var a, Var b,
                                   Mode mode, nd::Rng* dropout_rng) const {
  Var fa = represent(params, a, mode, dropout_rng);
  Var fb = represent(params, b, mode, dropout_rng);
  return similarity_logit(params, distance_maps(fa, fb));
}

Tensor SiameseNetwork::features(const nd::ParameterSet& params,
                                const Tensor& x) const {
  nd::Tape tape;
  ParameterBinding bind(tape, params);
  return represent(bind, tape.frozen(x), Mode::eval, nullptr).value();
}

std::vector<SimilarityScore> SiameseNetwork::head_scores(
    const nd::ParameterSet& params, const Tensor& f1, const Tensor& f2) const {
  nd::Tape tape;
  ParameterBinding bind(tape, params);
  const Tensor& logits =
      similarity_logit(bind, distance_maps(tape.frozen(f1), tape.frozen(f2))).value();
  std::vector<SimilarityScore> out;
  out.reserve(logits.size());
  for (double l : logits.values()) out.push_back(score_from_logit(l));
  return out;
}

std::vector<SimilarityScore> SiameseNetwork::siamese_scores(
    const nd::ParameterSet& params, const Tensor& a, const Tensor& b) const {
  return head_scores(params, features(params, a), features(params, b));
}

Tensor to_batch(std::span<const ResampledSpectrum> spectra) {
  std::vector<const ResampledSpectrum*> ptrs;
  ptrs.reserve(spectra.size());
  for (const auto& s : spectra) ptrs.push_back(&s);
  return to_batch(std::span<const ResampledSpectrum* const>(ptrs));
}

Tensor to_batch(std::span<const ResampledSpectrum* const> spectra) {
  if (spectra.empty()) return Tensor(0, 1, 0);
  const std::size_t L = spectra.front()->intensities.size();
  Tensor t(spectra.size(), 1, L);
  for (std::size_t n = 0; n < spectra.size(); ++n) {
    if (spectra[n]->intensities.size() != L) {
      throw nd::ShapeError("to_batch: spectra have different lengths");
    }
    std::copy(spectra[n]->intensities.begin(), spectra[n]->intensities.end(),
              t.row(n, 0));
  }
  return t;
}

}  // namespace ramanmatch
