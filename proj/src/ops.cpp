// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstddef>

#include "ramanmatch/ndcore.hpp"

namespace ramanmatch::nd {

namespace {

using Index = std::ptrdiff_t;

// Output positions t for which t*stride + offset lands inside [0, width).
struct TapRange {
  Index lo;
  Index hi;  // exclusive
};

TapRange tap_range(Index offset, Index stride, Index width, Index out_width) {
  Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  Index last = width - 1 - offset;
  Index hi = last >= 0 ? last / stride + 1 : 0;
  hi = std::min(hi, out_width);
  return {lo, std::max(lo, hi)};
}

// Four-way unrolled dot product; the reductions in the weight gradients are
// the hot loops of training.
double dot_strided(const double* a, const double* b, Index n, Index stride_b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Index t = 0;
  if (stride_b == 1) {
    for (; t + 4 <= n; t += 4) {
      s0 += a[t] * b[t];
      s1 += a[t + 1] * b[t + 1];
      s2 += a[t + 2] * b[t + 2];
      s3 += a[t + 3] * b[t + 3];
    }
    for (; t < n; ++t) s0 += a[t] * b[t];
  } else {
    for (; t < n; ++t) s0 += a[t] * b[t * stride_b];
  }
  return (s0 + s1) + (s2 + s3);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

Tape& tape_of(Var v) {
  if (v.tape == nullptr) throw std::invalid_argument("unbound variable");
  return *v.tape;
}

}  // namespace

// --- forward ---------------------------------------------------------------

Var conv1d(Var x, Var weight, std::optional<Var> bias, std::size_t stride,
           std::size_t padding) {
  Tape& tape = tape_of(x);
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require(W.channels() == X.channels(),
          "conv1d: input has " + std::to_string(X.channels()) +
              " channels but weight expects " + std::to_string(W.channels()));
  const std::size_t k = W.width();
  require(k % 2 == 1, "conv1d: kernel must be odd, got " + std::to_string(k));
  require(stride >= 1, "conv1d: stride must be positive");
  require(X.width() + 2 * padding >= k, "conv1d: kernel wider than input");
  const std::size_t co = W.batch();
  const std::size_t ci = X.channels();
  const std::size_t wo = (X.width() + 2 * padding - k) / stride + 1;
  const Tensor* B = nullptr;
  if (bias) {
    B = &bias->value();
    require(B->size() == co, "conv1d: bias size " + std::to_string(B->size()) +
                                 " != out channels " + std::to_string(co));
  }

  Tensor out(X.batch(), co, wo);
  const auto s = static_cast<Index>(stride);
  for (std::size_t n = 0; n < X.batch(); ++n) {
    for (std::size_t o = 0; o < co; ++o) {
      double* y = out.row(n, o);
      if (B) std::fill(y, y + wo, (*B)[o]);
      for (std::size_t i = 0; i < ci; ++i) {
        const double* xr = X.row(n, i);
        const double* wr = W.row(o, i);
        for (std::size_t kk = 0; kk < k; ++kk) {
          const Index off = static_cast<Index>(kk) - static_cast<Index>(padding);
          const auto r = tap_range(off, s, static_cast<Index>(X.width()),
                                   static_cast<Index>(wo));
          const double wv = wr[kk];
          if (s == 1) {
            for (Index t = r.lo; t < r.hi; ++t) y[t] += wv * xr[t + off];
          } else {
            for (Index t = r.lo; t < r.hi; ++t) y[t] += wv * xr[t * s + off];
          }
        }
      }
    }
  }
  Tape::Attrs a;
  a.stride = stride;
  a.padding = padding;
  if (bias) return tape.push(std::move(out), OpTag::conv1d, {x, weight, *bias}, a);
  return tape.push(std::move(out), OpTag::conv1d, {x, weight}, a);
}

Var depthwise_conv1d(Var x, Var weight) {
  Tape& tape = tape_of(x);
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require(W.batch() == X.channels() && W.channels() == 1,
          "depthwise_conv1d: weight " + W.shape_string() + " does not match " +
              std::to_string(X.channels()) + " input channels");
  const std::size_t k = W.width();
  require(k % 2 == 1, "depthwise_conv1d: kernel must be odd");
  const auto pad = static_cast<Index>((k - 1) / 2);
  const auto w = static_cast<Index>(X.width());

  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t n = 0; n < X.batch(); ++n) {
    for (std::size_t c = 0; c < X.channels(); ++c) {
      double* y = out.row(n, c);
      const double* xr = X.row(n, c);
      const double* wr = W.row(c, 0);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const Index off = static_cast<Index>(kk) - pad;
        const auto r = tap_range(off, 1, w, w);
        const double wv = wr[kk];
        for (Index t = r.lo; t < r.hi; ++t) y[t] += wv * xr[t + off];
      }
    }
  }
  Tape::Attrs a;
  a.padding = static_cast<std::size_t>(pad);
  return tape.push(std::move(out), OpTag::depthwise_conv1d, {x, weight}, a);
}

Var separable_conv1d(Var x, Var pointwise_weight, Var depthwise_weight,
                     std::size_t kernel) {
  const Tensor& P = pointwise_weight.value();
  const Tensor& D = depthwise_weight.value();
  require(P.width() == 1, "separable_conv1d: pointwise kernel must be 1");
  require(D.width() == kernel, "separable_conv1d: depthwise kernel " +
                                   std::to_string(D.width()) + " != " +
                                   std::to_string(kernel));
  require(D.batch() == P.batch(),
          "separable_conv1d: depthwise channels do not match pointwise output");
  Var mixed = conv1d(x, pointwise_weight, std::nullopt, 1, 0);
  return depthwise_conv1d(mixed, depthwise_weight);
}

Var batch_norm(Var x, Var gamma, Var beta, const BatchNormBuffers& buffers,
               Mode mode, double momentum, double eps) {
  Tape& tape = tape_of(x);
  const Tensor& X = x.value();
  const Tensor& G = gamma.value();
  const Tensor& Bt = beta.value();
  const std::size_t C = X.channels();
  require(G.size() == C && Bt.size() == C,
          "batch_norm: affine parameters do not match " + std::to_string(C) +
              " channels");
  require(buffers.mean && buffers.var && buffers.count,
          "batch_norm: running statistics not bound");
  require(buffers.mean->size() == C && buffers.var->size() == C,
          "batch_norm: running statistics do not match channel count");

  const std::size_t N = X.batch();
  const std::size_t W = X.width();
  const double M = static_cast<double>(N * W);
  std::vector<double> mean(C), var(C), inv_std(C);

  if (mode == Mode::train) {
    if (!buffers.mutable_mean || !buffers.mutable_var || !buffers.mutable_count) {
      throw std::logic_error("batch_norm: train mode needs writable statistics");
    }
    require(N * W > 0, "batch_norm: empty batch");
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* r = X.row(n, c);
        for (std::size_t t = 0; t < W; ++t) s += r[t];
      }
      mean[c] = s / M;
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* r = X.row(n, c);
        for (std::size_t t = 0; t < W; ++t) {
          const double d = r[t] - mean[c];
          ss += d * d;
        }
      }
      var[c] = ss / M;
      inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    Tensor& rm = *buffers.mutable_mean;
    Tensor& rv = *buffers.mutable_var;
    Tensor& cnt = *buffers.mutable_count;
    const double unbias = M > 1.0 ? M / (M - 1.0) : 1.0;
    for (std::size_t c = 0; c < C; ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
    }
    cnt[0] += 1.0;
  } else {
    if ((*buffers.count)[0] <= 0.0) {
      throw std::logic_error(
          "batch_norm: eval mode before any train-mode pass (running "
          "statistics uninitialized)");
    }
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = (*buffers.mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*buffers.var)[c] + eps);
    }
  }

  Tensor out(N, C, W);
  std::vector<double> xhat(X.size());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* r = X.row(n, c);
      double* y = out.row(n, c);
      double* h = xhat.data() + (n * C + c) * W;
      for (std::size_t t = 0; t < W; ++t) {
        h[t] = (r[t] - mean[c]) * inv_std[c];
        y[t] = G[c] * h[t] + Bt[c];
      }
    }
  }
  Tape::Attrs a;
  a.mode = mode;
  a.eps = eps;
  a.saved = std::move(xhat);
  a.saved2 = std::move(inv_std);
  return tape.push(std::move(out), OpTag::batch_norm, {x, gamma, beta}, a);
}

Var leaky_relu(Var x, double slope) {
  const Tensor& X = x.value();
  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t i = 0; i < X.size(); ++i) {
    out[i] = X[i] > 0.0 ? X[i] : slope * X[i];
  }
  Tape::Attrs a;
  a.scalar = slope;
  return tape_of(x).push(std::move(out), OpTag::leaky_relu, {x}, a);
}

Var max_pool1d(Var x, std::size_t window, std::size_t stride) {
  const Tensor& X = x.value();
  require(window >= 2, "max_pool1d: window must be at least 2");
  require(stride >= 1, "max_pool1d: stride must be positive");
  require(window <= X.width(), "max_pool1d: window " + std::to_string(window) +
                                   " exceeds width " +
                                   std::to_string(X.width()));
  const std::size_t wo = (X.width() - window) / stride + 1;
  Tensor out(X.batch(), X.channels(), wo);
  Tape::Attrs a;
  a.window = window;
  a.stride = stride;
  a.indices.resize(out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < X.batch(); ++n) {
    for (std::size_t c = 0; c < X.channels(); ++c) {
      const double* r = X.row(n, c);
      const std::size_t base = (n * X.channels() + c) * X.width();
      for (std::size_t t = 0; t < wo; ++t, ++o) {
        std::size_t best = t * stride;
        for (std::size_t j = best + 1; j < t * stride + window; ++j) {
          if (r[j] > r[best]) best = j;
        }
        out[o] = r[best];
        a.indices[o] = base + best;
      }
    }
  }
  return tape_of(x).push(std::move(out), OpTag::max_pool1d, {x}, a);
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const Tensor& X = x.value();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tape::Attrs a;
  a.saved.resize(X.size());
  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t i = 0; i < X.size(); ++i) {
    a.saved[i] = u(rng) < rate ? 0.0 : keep_scale;
    out[i] = X[i] * a.saved[i];
  }
  a.scalar = rate;
  a.mode = mode;
  return tape_of(x).push(std::move(out), OpTag::dropout, {x}, a);
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& B = bias.value();
  const std::size_t in = X.channels() * X.width();
  require(W.batch() == 1 && W.width() == in,
          "linear: weight " + W.shape_string() + " does not accept " +
              std::to_string(in) + " inputs");
  const std::size_t outs = W.channels();
  require(B.size() == outs, "linear: bias size mismatch");
  Tensor out(X.batch(), 1, outs);
  for (std::size_t n = 0; n < X.batch(); ++n) {
    const double* xr = X.item(n).data();
    for (std::size_t j = 0; j < outs; ++j) {
      out(n, 0, j) = B[j] + dot_strided(W.row(0, j), xr,
                                        static_cast<Index>(in), 1);
    }
  }
  return tape_of(x).push(std::move(out), OpTag::linear, {x, weight, bias});
}

Var sigmoid(Var x) {
  const Tensor& X = x.value();
  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double v = X[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return tape_of(x).push(std::move(out), OpTag::sigmoid, {x});
}

namespace {

Var elementwise(Var a, Var b, OpTag tag, const char* name) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), std::string(name) + ": shape mismatch " +
                               A.shape_string() + " vs " + B.shape_string());
  Tensor out(A.batch(), A.channels(), A.width());
  for (std::size_t i = 0; i < A.size(); ++i) {
    switch (tag) {
      case OpTag::add: out[i] = A[i] + B[i]; break;
      case OpTag::sub: out[i] = A[i] - B[i]; break;
      default: out[i] = A[i] * B[i]; break;
    }
  }
  return tape_of(a).push(std::move(out), tag, {a, b});
}

}  // namespace

Var add(Var a, Var b) { return elementwise(a, b, OpTag::add, "add"); }
Var sub(Var a, Var b) { return elementwise(a, b, OpTag::sub, "sub"); }
Var mul(Var a, Var b) { return elementwise(a, b, OpTag::mul, "mul"); }

Var abs(Var x) {
  const Tensor& X = x.value();
  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::fabs(X[i]);
  return tape_of(x).push(std::move(out), OpTag::abs, {x});
}

Var scale(Var x, double factor) {
  const Tensor& X = x.value();
  Tensor out(X.batch(), X.channels(), X.width());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = factor * X[i];
  Tape::Attrs a;
  a.scalar = factor;
  return tape_of(x).push(std::move(out), OpTag::scale, {x}, a);
}

Var concat_width(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.batch() == B.batch() && A.channels() == B.channels(),
          "concat_width: " + A.shape_string() + " and " + B.shape_string() +
              " differ in batch or channels");
  const std::size_t w1 = A.width();
  const std::size_t w2 = B.width();
  Tensor out(A.batch(), A.channels(), w1 + w2);
  for (std::size_t n = 0; n < A.batch(); ++n) {
    for (std::size_t c = 0; c < A.channels(); ++c) {
      std::copy_n(A.row(n, c), w1, out.row(n, c));
      std::copy_n(B.row(n, c), w2, out.row(n, c) + w1);
    }
  }
  Tape::Attrs at;
  at.window = w1;
  return tape_of(a).push(std::move(out), OpTag::concat_width, {a, b}, at);
}

Var gather_batch(Var x, std::span<const std::size_t> indices) {
  const Tensor& X = x.value();
  Tensor out(indices.size(), X.channels(), X.width());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= X.batch()) {
      throw std::out_of_range("gather_batch: index " +
                              std::to_string(indices[j]) + " out of range");
    }
    const auto src = X.item(indices[j]);
    std::copy(src.begin(), src.end(), out.item(j).begin());
  }
  Tape::Attrs a;
  a.indices.assign(indices.begin(), indices.end());
  return tape_of(x).push(std::move(out), OpTag::gather_batch, {x}, a);
}

Var sum_squares(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  return tape_of(x).push(Tensor::scalar(s), OpTag::sum_squares, {x});
}

Var binary_cross_entropy(Var p, std::span<const double> labels) {
  const Tensor& P = p.value();
  require(P.size() == labels.size() && !labels.empty(),
          "binary_cross_entropy: " + std::to_string(P.size()) +
              " scores vs " + std::to_string(labels.size()) + " labels");
  constexpr double kClamp = 1e-12;
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double q = std::clamp(P[i], kClamp, 1.0 - kClamp);
    const double y = labels[i];
    s += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  Tape::Attrs a;
  a.saved.assign(labels.begin(), labels.end());
  return tape_of(p).push(
      Tensor::scalar(-s / static_cast<double>(labels.size())),
      OpTag::binary_cross_entropy, {p}, a);
}

// --- backward --------------------------------------------------------------

namespace {

void conv1d_backward(Tape& tape, Tape::Node& node) {
  Tape::Node& xn = tape.node(node.parents[0]);
  Tape::Node& wn = tape.node(node.parents[1]);
  Tape::Node* bn = node.parents.size() > 2 ? &tape.node(node.parents[2]) : nullptr;
  const Tensor& X = tape.value({&tape, node.parents[0]});
  const Tensor& W = tape.value({&tape, node.parents[1]});
  const Tensor& G = node.grad;
  const std::size_t k = W.width();
  const auto s = static_cast<Index>(node.attrs.stride);
  const auto pad = static_cast<Index>(node.attrs.padding);
  const std::size_t wo = G.width();

  for (std::size_t n = 0; n < X.batch(); ++n) {
    for (std::size_t o = 0; o < W.batch(); ++o) {
      const double* g = G.row(n, o);
      if (bn && bn->requires_grad) {
        double acc = 0.0;
        for (std::size_t t = 0; t < wo; ++t) acc += g[t];
        bn->grad[o] += acc;
      }
      for (std::size_t i = 0; i < X.channels(); ++i) {
        const double* xr = X.row(n, i);
        const double* wr = W.row(o, i);
        double* dx = xn.requires_grad ? xn.grad.row(n, i) : nullptr;
        double* dw = wn.requires_grad ? wn.grad.row(o, i) : nullptr;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const Index off = static_cast<Index>(kk) - pad;
          const auto r = tap_range(off, s, static_cast<Index>(X.width()),
                                   static_cast<Index>(wo));
          if (r.hi <= r.lo) continue;
          if (dw) {
            dw[kk] += dot_strided(g + r.lo, xr + r.lo * s + off, r.hi - r.lo, s);
          }
          if (dx) {
            const double wv = wr[kk];
            if (s == 1) {
              for (Index t = r.lo; t < r.hi; ++t) dx[t + off] += wv * g[t];
            } else {
              for (Index t = r.lo; t < r.hi; ++t) dx[t * s + off] += wv * g[t];
            }
          }
        }
      }
    }
  }
}

void depthwise_backward(Tape& tape, Tape::Node& node) {
  Tape::Node& xn = tape.node(node.parents[0]);
  Tape::Node& wn = tape.node(node.parents[1]);
  const Tensor& X = tape.value({&tape, node.parents[0]});
  const Tensor& W = tape.value({&tape, node.parents[1]});
  const Tensor& G = node.grad;
  const auto pad = static_cast<Index>(node.attrs.padding);
  const auto w = static_cast<Index>(X.width());
  for (std::size_t n = 0; n < X.batch(); ++n) {
    for (std::size_t c = 0; c < X.channels(); ++c) {
      const double* g = G.row(n, c);
      const double* xr = X.row(n, c);
      const double* wr = W.row(c, 0);
      for (std::size_t kk = 0; kk < W.width(); ++kk) {
        const Index off = static_cast<Index>(kk) - pad;
        const auto r = tap_range(off, 1, w, w);
        if (r.hi <= r.lo) continue;
        if (wn.requires_grad) {
          wn.grad.row(c, 0)[kk] +=
              dot_strided(g + r.lo, xr + r.lo + off, r.hi - r.lo, 1);
        }
        if (xn.requires_grad) {
          double* dx = xn.grad.row(n, c);
          const double wv = wr[kk];
          for (Index t = r.lo; t < r.hi; ++t) dx[t + off] += wv * g[t];
        }
      }
    }
  }
}

void batch_norm_backward(Tape& tape, Tape::Node& node) {
  Tape::Node& xn = tape.node(node.parents[0]);
  Tape::Node& gn = tape.node(node.parents[1]);
  Tape::Node& bn = tape.node(node.parents[2]);
  const Tensor& Gamma = tape.value({&tape, node.parents[1]});
  const Tensor& G = node.grad;
  const std::vector<double>& xhat = node.attrs.saved;
  const std::vector<double>& inv_std = node.attrs.saved2;
  const std::size_t N = G.batch(), C = G.channels(), W = G.width();
  const double M = static_cast<double>(N * W);

  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = G.row(n, c);
      const double* h = xhat.data() + (n * C + c) * W;
      for (std::size_t t = 0; t < W; ++t) {
        sum_g += g[t];
        sum_gx += g[t] * h[t];
      }
    }
    if (gn.requires_grad) gn.grad[c] += sum_gx;
    if (bn.requires_grad) bn.grad[c] += sum_g;
    if (!xn.requires_grad) continue;
    const double gam = Gamma[c];
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = G.row(n, c);
      const double* h = xhat.data() + (n * C + c) * W;
      double* dx = xn.grad.row(n, c);
      if (node.attrs.mode == Mode::train) {
        // dx = gamma * inv_std / M * (M*g - sum(g) - xhat*sum(g*xhat))
        const double k = gam * inv_std[c] / M;
        for (std::size_t t = 0; t < W; ++t) {
          dx[t] += k * (M * g[t] - sum_g - h[t] * sum_gx);
        }
      } else {
        const double k = gam * inv_std[c];
        for (std::size_t t = 0; t < W; ++t) dx[t] += k * g[t];
      }
    }
  }
}

}  // namespace

void backward_node(Tape& tape, std::size_t id) {
  Tape::Node& node = tape.node(id);
  const Tensor& G = node.grad;
  auto parent = [&](std::size_t j) -> Tape::Node& {
    return tape.node(node.parents[j]);
  };
  auto parent_value = [&](std::size_t j) -> const Tensor& {
    return tape.value({&tape, node.parents[j]});
  };

  switch (node.tag) {
    case OpTag::constant:
    case OpTag::parameter:
      break;
    case OpTag::conv1d:
      conv1d_backward(tape, node);
      break;
    case OpTag::depthwise_conv1d:
      depthwise_backward(tape, node);
      break;
    case OpTag::batch_norm:
      batch_norm_backward(tape, node);
      break;
    case OpTag::leaky_relu: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      const Tensor& X = parent_value(0);
      const double slope = node.attrs.scalar;
      for (std::size_t i = 0; i < G.size(); ++i) {
        xn.grad[i] += X[i] > 0.0 ? G[i] : slope * G[i];
      }
      break;
    }
    case OpTag::max_pool1d: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      for (std::size_t o = 0; o < G.size(); ++o) {
        xn.grad[node.attrs.indices[o]] += G[o];
      }
      break;
    }
    case OpTag::dropout: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      for (std::size_t i = 0; i < G.size(); ++i) {
        xn.grad[i] += G[i] * node.attrs.saved[i];
      }
      break;
    }
    case OpTag::linear: {
      Tape::Node& xn = parent(0);
      Tape::Node& wn = parent(1);
      Tape::Node& bn = parent(2);
      const Tensor& X = parent_value(0);
      const Tensor& W = parent_value(1);
      const std::size_t in = W.width();
      for (std::size_t n = 0; n < X.batch(); ++n) {
        const double* xr = X.item(n).data();
        for (std::size_t j = 0; j < W.channels(); ++j) {
          const double g = G(n, 0, j);
          if (bn.requires_grad) bn.grad[j] += g;
          if (wn.requires_grad) {
            double* dw = wn.grad.row(0, j);
            for (std::size_t i = 0; i < in; ++i) dw[i] += g * xr[i];
          }
          if (xn.requires_grad) {
            double* dx = xn.grad.item(n).data();
            const double* wr = W.row(0, j);
            for (std::size_t i = 0; i < in; ++i) dx[i] += g * wr[i];
          }
        }
      }
      break;
    }
    case OpTag::sigmoid: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      const Tensor& Y = node.value;
      for (std::size_t i = 0; i < G.size(); ++i) {
        xn.grad[i] += G[i] * Y[i] * (1.0 - Y[i]);
      }
      break;
    }
    case OpTag::add:
    case OpTag::sub: {
      const double sign_b = node.tag == OpTag::add ? 1.0 : -1.0;
      if (parent(0).requires_grad) {
        for (std::size_t i = 0; i < G.size(); ++i) parent(0).grad[i] += G[i];
      }
      if (parent(1).requires_grad) {
        for (std::size_t i = 0; i < G.size(); ++i) {
          parent(1).grad[i] += sign_b * G[i];
        }
      }
      break;
    }
    case OpTag::mul: {
      const Tensor& A = parent_value(0);
      const Tensor& B = parent_value(1);
      if (parent(0).requires_grad) {
        for (std::size_t i = 0; i < G.size(); ++i) parent(0).grad[i] += G[i] * B[i];
      }
      if (parent(1).requires_grad) {
        for (std::size_t i = 0; i < G.size(); ++i) parent(1).grad[i] += G[i] * A[i];
      }
      break;
    }
    case OpTag::abs: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      const Tensor& X = parent_value(0);
      for (std::size_t i = 0; i < G.size(); ++i) {
        const double sgn = X[i] > 0.0 ? 1.0 : (X[i] < 0.0 ? -1.0 : 0.0);
        xn.grad[i] += sgn * G[i];
      }
      break;
    }
    case OpTag::scale: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      for (std::size_t i = 0; i < G.size(); ++i) {
        xn.grad[i] += node.attrs.scalar * G[i];
      }
      break;
    }
    case OpTag::concat_width: {
      const std::size_t w1 = node.attrs.window;
      const std::size_t w2 = G.width() - w1;
      for (std::size_t n = 0; n < G.batch(); ++n) {
        for (std::size_t c = 0; c < G.channels(); ++c) {
          const double* g = G.row(n, c);
          if (parent(0).requires_grad) {
            double* d = parent(0).grad.row(n, c);
            for (std::size_t t = 0; t < w1; ++t) d[t] += g[t];
          }
          if (parent(1).requires_grad) {
            double* d = parent(1).grad.row(n, c);
            for (std::size_t t = 0; t < w2; ++t) d[t] += g[w1 + t];
          }
        }
      }
      break;
    }
    case OpTag::gather_batch: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      for (std::size_t j = 0; j < node.attrs.indices.size(); ++j) {
        auto dst = xn.grad.item(node.attrs.indices[j]);
        auto src = G.item(j);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
      break;
    }
    case OpTag::sum_squares: {
      Tape::Node& xn = parent(0);
      if (!xn.requires_grad) break;
      const Tensor& X = parent_value(0);
      const double g = G[0];
      for (std::size_t i = 0; i < X.size(); ++i) xn.grad[i] += 2.0 * X[i] * g;
      break;
    }
    case OpTag::binary_cross_entropy: {
      Tape::Node& pn = parent(0);
      if (!pn.requires_grad) break;
      const Tensor& P = parent_value(0);
      const auto& y = node.attrs.saved;
      const double k = -G[0] / static_cast<double>(y.size());
      for (std::size_t i = 0; i < P.size(); ++i) {
        const double q = std::clamp(P[i], 1e-12, 1.0 - 1e-12);
        pn.grad[i] += k * (y[i] / q - (1.0 - y[i]) / (1.0 - q));
      }
      break;
    }
  }
}

}  // namespace ramanmatch::nd
