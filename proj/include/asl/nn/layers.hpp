#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "asl/nn/tensor.hpp"

// Layer kernels of the 1-D CNN. Weights are flat spans with fixed layouts:
//   conv   W[f][c][k] (filters x channels x kernel), b[f]
//   dense  W[o][i]    (outputs x inputs),            b[o]
namespace asl::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Unrolls x into (channels*kernel) x length columns for 'same' zero-padded correlation.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t kernel, std::vector<T>& cols) {
  const std::size_t C = x.channels(), L = x.length();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  cols.assign(C * kernel * L, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    const T* src = x.data() + c * L;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* dst = cols.data() + (c * kernel + k) * L;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - half;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(L), static_cast<std::ptrdiff_t>(L) - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) dst[t] = src[t + shift];
    }
  }
}

/// Inverse scatter of im2col: accumulates column gradients back onto the input positions.
template <typename T>
void col2im(std::span<const T> cols, std::size_t channels, std::size_t length, std::size_t kernel, Tensor<T>& dx) {
  dx = Tensor<T>(channels, length);
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = dx.data() + c * length;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* src = cols.data() + (c * kernel + k) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - half;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(length), static_cast<std::ptrdiff_t>(length) - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) dst[t + shift] += src[t];
    }
  }
}

/// out[f,t] = b[f] + sum_{c,k} W[f,c,k] * x[c, t+k-K/2], zero padded, stride 1, no kernel flip.
/// `cols` receives the unrolled input for reuse in the backward pass.
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, std::span<const T> w, std::span<const T> b, std::size_t filters,
                         std::size_t kernel, std::vector<T>& cols) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  if (w.size() != filters * x.channels() * kernel || b.size() != filters)
    throw std::invalid_argument("conv1d: weight shape mismatch");
  im2col(x, kernel, cols);
  const std::size_t CK = x.channels() * kernel, L = x.length();
  Tensor<T> out(filters, L);
  MatrixMap<T> y(out.data(), filters, L);
  y.noalias() = ConstMatrixMap<T>(w.data(), filters, CK) * ConstMatrixMap<T>(cols.data(), CK, L);
  y.colwise() += ConstVectorMap<T>(b.data(), filters);
  return out;
}

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, std::span<const T> w, std::span<const T> b, std::size_t filters,
                         std::size_t kernel) {
  std::vector<T> cols;
  return conv1d_forward(x, w, b, filters, kernel, cols);
}

/// Accumulates dW, db; writes dx when non-null.
template <typename T>
void conv1d_backward(std::span<const T> cols, const Tensor<T>& dy, std::size_t in_channels, std::size_t kernel,
                     std::span<const T> w, std::span<T> dw, std::span<T> db, Tensor<T>* dx) {
  const std::size_t F = dy.channels(), L = dy.length(), CK = in_channels * kernel;
  if (dw.size() != F * CK || db.size() != F || cols.size() != CK * L)
    throw std::invalid_argument("conv1d_backward: shape mismatch");
  ConstMatrixMap<T> g(dy.data(), F, L);
  MatrixMap<T>(dw.data(), F, CK).noalias() += g * ConstMatrixMap<T>(cols.data(), CK, L).transpose();
  // Fixed summation order: Eigen reductions peel by runtime alignment, which would make
  // results depend on where the allocator placed the buffer.
  for (std::size_t f = 0; f < F; ++f) {
    T sum = T(0);
    for (std::size_t t = 0; t < L; ++t) sum += dy(f, t);
    db[f] += sum;
  }
  if (dx != nullptr) {
    std::vector<T> dcols(CK * L);
    MatrixMap<T>(dcols.data(), CK, L).noalias() = ConstMatrixMap<T>(w.data(), F, CK).transpose() * g;
    col2im<T>(dcols, in_channels, L, kernel, *dx);
  }
}

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // input time index per output element
};

/// Non-overlapping max pooling with stride = pool; a trailing remainder is dropped.
template <typename T>
PoolResult<T> maxpool1d_forward(const Tensor<T>& x, std::size_t pool) {
  if (pool < 1) throw std::invalid_argument("maxpool1d: pool must be >= 1");
  if (pool > x.length()) throw std::invalid_argument("maxpool1d: pool larger than input length");
  const std::size_t C = x.channels(), Lo = x.length() / pool;
  PoolResult<T> r{Tensor<T>(C, Lo), std::vector<std::uint32_t>(C * Lo)};
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t o = 0; o < Lo; ++o) {
      std::size_t best = o * pool;
      T v = x(c, best);
      for (std::size_t t = best + 1; t < (o + 1) * pool; ++t) {
        if (x(c, t) > v) {
          v = x(c, t);
          best = t;
        }
      }
      r.output(c, o) = v;
      r.argmax[c * Lo + o] = static_cast<std::uint32_t>(best);
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool1d_backward(const Tensor<T>& dy, std::span<const std::uint32_t> argmax, std::size_t input_length) {
  Tensor<T> dx(dy.channels(), input_length);
  for (std::size_t c = 0; c < dy.channels(); ++c)
    for (std::size_t o = 0; o < dy.length(); ++o) dx(c, argmax[c * dy.length() + o]) += dy(c, o);
  return dx;
}

template <typename T>
void relu_inplace(std::span<T> x) {
  for (T& v : x) v = v > T(0) ? v : T(0);
}

template <typename T>
T relu(T v) {
  return v > T(0) ? v : T(0);
}

/// dy masked by pre-activation > 0 (the subgradient at 0 is taken as 0).
template <typename T>
void relu_backward_inplace(std::span<T> dy, std::span<const T> pre) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(pre[i] > T(0))) dy[i] = T(0);
  }
}

/// y = W x + b.
template <typename T>
std::vector<T> dense_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b) {
  const std::size_t out = b.size(), in = x.size();
  if (w.size() != out * in) throw std::invalid_argument("dense: weight shape mismatch");
  std::vector<T> y(out);
  VectorMap<T>(y.data(), out).noalias() =
      ConstMatrixMap<T>(w.data(), out, in) * ConstVectorMap<T>(x.data(), in) + ConstVectorMap<T>(b.data(), out);
  return y;
}

/// Accumulates dW, db; returns dx.
template <typename T>
std::vector<T> dense_backward(std::span<const T> x, std::span<const T> dy, std::span<const T> w, std::span<T> dw,
                              std::span<T> db) {
  const std::size_t out = dy.size(), in = x.size();
  if (w.size() != out * in || dw.size() != out * in || db.size() != out)
    throw std::invalid_argument("dense_backward: shape mismatch");
  ConstVectorMap<T> g(dy.data(), out);
  MatrixMap<T>(dw.data(), out, in).noalias() += g * ConstVectorMap<T>(x.data(), in).transpose();
  VectorMap<T>(db.data(), out) += g;
  std::vector<T> dx(in);
  VectorMap<T>(dx.data(), in).noalias() = ConstMatrixMap<T>(w.data(), out, in).transpose() * g;
  return dx;
}

/// Inverted-dropout multipliers: 0 for dropped units, 1/(1-p) for kept ones.
template <typename T, typename Rng>
std::vector<T> dropout_mask(std::size_t n, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  std::vector<T> mask(n, T(1));
  if (p == 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (T& m : mask) m = keep(rng) ? scale : T(0);
  return mask;
}

template <typename T>
void apply_mask(std::span<T> x, std::span<const T> mask) {
  if (x.size() != mask.size()) throw std::invalid_argument("dropout: mask size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace asl::nn
