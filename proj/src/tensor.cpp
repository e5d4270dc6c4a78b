// SPDX-License-Identifier: Apache-2.0
#include "ramanmatch/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ramanmatch::nd {

Tensor::Tensor(std::size_t batch, std::size_t channels, std::size_t width,
               double fill)
    : batch_(batch),
      channels_(channels),
      width_(width),
      data_(batch * channels * width, fill) {}

Tensor Tensor::from_values(std::size_t batch, std::size_t channels,
                           std::size_t width, std::vector<double> values) {
  if (values.size() != batch * channels * width) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values do not fill shape (" + std::to_string(batch) +
                     ", " + std::to_string(channels) + ", " +
                     std::to_string(width) + ")");
  }
  Tensor t;
  t.batch_ = batch;
  t.channels_ = channels;
  t.width_ = width;
  t.data_ = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  return "(" + std::to_string(batch_) + ", " + std::to_string(channels_) +
         ", " + std::to_string(width_) + ")";
}

}  // namespace ramanmatch::nd
