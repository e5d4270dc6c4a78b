// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "ramanmatch/tensor.hpp"

namespace ramanmatch::nd {

// Stored as a byte in checkpoints; keep the numeric values stable.
enum class ParamKind : std::uint8_t {
  weight = 0,       // conv / linear weights, L2-regularized
  bias = 1,
  norm_affine = 2,  // batch-norm gamma and beta
  buffer = 3,       // running statistics, not trained
};

struct Parameter {
  Tensor value;
  Tensor grad;
  ParamKind kind = ParamKind::weight;

  bool trainable() const { return kind != ParamKind::buffer; }
  bool regularized() const { return kind == ParamKind::weight; }
};

/// Named learnable state of one model. Iteration order is by name.
class ParameterSet {
 public:
  using Map = std::map<std::string, Parameter, std::less<>>;

  Parameter& add(std::string name, Tensor value, ParamKind kind);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  std::size_t entries() const { return params_.size(); }

  /// Number of trainable scalars (buffers excluded).
  std::size_t param_count() const;
  void zero_grad();
  /// Sum of squares over regularized weights only.
  double weight_sum_squares() const;
  /// FNV-1a over names and value bytes; identifies a parameter state.
  std::uint64_t checksum() const;

  std::string version = "1";
  std::uint64_t init_seed = 0;
  std::uint64_t arch_hash = 0;

 private:
  Map params_;
};

/// Binary checkpoint, little-endian throughout:
///
///   magic "RMCK" | u32 format_version (=1) | u64 init_seed | u64 arch_hash
///   | u32 version_len | version bytes | u32 entry_count
///   then per entry, in name order:
///   u32 name_len | name bytes | u8 kind | u64 batch | u64 channels | u64 width
///   | batch*channels*width f64 values
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path,
                     const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace ramanmatch::nd
