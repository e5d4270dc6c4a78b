// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ramanmatch::nd {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major block of `batch` matrices, each `channels x width`.
///
/// A single feature map is a tensor with batch() == 1. Weights reuse the same
/// layout: a conv kernel is (out_channels, in_channels, kernel).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t batch, std::size_t channels, std::size_t width,
         double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(1, 1, 1, v); }
  static Tensor from_values(std::size_t batch, std::size_t channels,
                            std::size_t width, std::vector<double> values);

  std::size_t batch() const { return batch_; }
  std::size_t channels() const { return channels_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t n, std::size_t c, std::size_t w) {
    return data_[(n * channels_ + c) * width_ + w];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t w) const {
    return data_[(n * channels_ + c) * width_ + w];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* row(std::size_t n, std::size_t c) {
    return data_.data() + (n * channels_ + c) * width_;
  }
  const double* row(std::size_t n, std::size_t c) const {
    return data_.data() + (n * channels_ + c) * width_;
  }
  /// Contiguous channels*width block of one batch item.
  std::span<double> item(std::size_t n) {
    return {data_.data() + n * channels_ * width_, channels_ * width_};
  }
  std::span<const double> item(std::size_t n) const {
    return {data_.data() + n * channels_ * width_, channels_ * width_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return batch_ == other.batch_ && channels_ == other.channels_ &&
           width_ == other.width_;
  }
  bool is_scalar() const { return batch_ == 1 && channels_ == 1 && width_ == 1; }
  bool all_finite() const;
  void fill(double v);

  std::string shape_string() const;

 private:
  std::size_t batch_ = 0;
  std::size_t channels_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

}  // namespace ramanmatch::nd
