// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations used only by tests. They follow the
// textbook definitions directly (one output element at a time) and share no
// code with the library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ramanmatch/tensor.hpp"

namespace ramanmatch::testing {

using nd::Tensor;

inline Tensor random_tensor(std::size_t n, std::size_t c, std::size_t w,
                            std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(n, c, w);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

// y(n,o,t) = b(o) + sum_i sum_k W(o,i,k) * x(n,i,t*stride + k - padding)
inline Tensor conv1d_oracle(const Tensor& x, const Tensor& w, const Tensor* b,
                            std::size_t stride, std::size_t padding) {
  const std::size_t k = w.width();
  const std::size_t wo = (x.width() + 2 * padding - k) / stride + 1;
  Tensor y(x.batch(), w.batch(), wo);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t o = 0; o < w.batch(); ++o) {
      for (std::size_t t = 0; t < wo; ++t) {
        double acc = b ? (*b)[o] : 0.0;
        for (std::size_t i = 0; i < x.channels(); ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const long pos = static_cast<long>(t * stride + kk) -
                             static_cast<long>(padding);
            if (pos < 0 || pos >= static_cast<long>(x.width())) continue;
            acc += w(o, i, kk) * x(n, i, static_cast<std::size_t>(pos));
          }
        }
        y(n, o, t) = acc;
      }
    }
  }
  return y;
}

// Grouped convolution with one group per channel, same padding.
inline Tensor depthwise_oracle(const Tensor& x, const Tensor& w) {
  const std::size_t k = w.width();
  const long pad = static_cast<long>((k - 1) / 2);
  Tensor y(x.batch(), x.channels(), x.width());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      for (std::size_t t = 0; t < x.width(); ++t) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long pos = static_cast<long>(t + kk) - pad;
          if (pos < 0 || pos >= static_cast<long>(x.width())) continue;
          acc += w(c, 0, kk) * x(n, c, static_cast<std::size_t>(pos));
        }
        y(n, c, t) = acc;
      }
    }
  }
  return y;
}

inline Tensor max_pool_oracle(const Tensor& x, std::size_t window,
                              std::size_t stride) {
  const std::size_t wo = (x.width() - window) / stride + 1;
  Tensor y(x.batch(), x.channels(), wo);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      for (std::size_t t = 0; t < wo; ++t) {
        double m = -INFINITY;
        for (std::size_t j = 0; j < window; ++j) {
          m = std::max(m, x(n, c, t * stride + j));
        }
        y(n, c, t) = m;
      }
    }
  }
  return y;
}

// Plain matrix-vector product over the flattened item.
inline Tensor linear_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = x.channels() * x.width();
  Tensor y(x.batch(), 1, w.channels());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t j = 0; j < w.channels(); ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < in; ++i) {
        acc += w(0, j, i) * x(n, i / x.width(), i % x.width());
      }
      y(n, 0, j) = acc;
    }
  }
  return y;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

/// Central difference of f with respect to one scalar it reads.
inline double central_difference(const std::function<double()>& f, double& x,
                                 double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// |a - b| <= max(abs_floor, rel * max(|a|, |b|))
inline bool grad_close(double analytic, double numeric, double rel,
                       double abs_floor) {
  const double diff = std::fabs(analytic - numeric);
  const double mag = std::max(std::fabs(analytic), std::fabs(numeric));
  return diff <= abs_floor || diff <= rel * mag;
}

}  // namespace ramanmatch::testing
