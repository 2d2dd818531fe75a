#pragma once

// Layer primitives with hand-derived backward passes.
//
// Raw routines take row-major spans plus explicit dimensions; backward
// routines *accumulate* into dW/db/dx so several uses of one parameter sum
// naturally. An empty bias span means "no bias"; an empty dx span skips the
// input gradient.
//
// conv1d is kernel-3 / padding-1 and is computed as im2col followed by a
// linear map: col[t, c*3 + k] = x[t + k - 1, c] (zero outside [0, len)),
// which matches the [c_out, c_in, 3] kernel layout flattened per output.

#include <span>

#include "halunet/rng.hpp"
#include "halunet/tensor.hpp"

namespace halunet {

inline constexpr int kConvWidth = 3;

// y[n,out] = x[n,in] * W[out,in]^T + b[out]
template <class Real>
void linear_forward(std::span<const Real> x, int n, int in, std::span<const Real> W,
                    std::span<const Real> b, int out, std::span<Real> y);

template <class Real>
void linear_backward(std::span<const Real> x, int n, int in, std::span<const Real> W, int out,
                     std::span<const Real> dy, std::span<Real> dW, std::span<Real> db,
                     std::span<Real> dx);

template <class Real>
void im2col3(std::span<const Real> x, int len, int c_in, std::span<Real> col);

template <class Real>
void col2im3_accumulate(std::span<const Real> dcol, int len, int c_in, std::span<Real> dx);

// y[len,c_out]; `col` receives the im2col buffer (len x c_in*3) for backward.
template <class Real>
void conv1d_forward(std::span<const Real> x, int len, int c_in, std::span<const Real> K,
                    std::span<const Real> b, int c_out, std::span<Real> col, std::span<Real> y);

// `dcol` is scratch of size len x c_in*3, only touched when dx is requested.
template <class Real>
void conv1d_backward(std::span<const Real> col, int len, int c_in, std::span<const Real> K,
                     int c_out, std::span<const Real> dy, std::span<Real> dK, std::span<Real> db,
                     std::span<Real> dcol, std::span<Real> dx);

template <class Real>
void relu_inplace(std::span<Real> x);

/// dy[i] = 0 wherever the ReLU output y[i] was 0.
template <class Real>
void relu_backward_inplace(std::span<const Real> y, std::span<Real> dy);

template <class Real>
Real sigmoid(Real x);

template <class Real>
void softmax(std::span<const Real> logits, std::span<Real> out);

/// Mean over the first `count` rows of x[rows, cols].
template <class Real>
void masked_mean_pool(std::span<const Real> x, int cols, int count, std::span<Real> out);

/// Spreads d(out)/count over the first `count` rows of dx (accumulating).
template <class Real>
void masked_mean_pool_backward(std::span<const Real> dout, int cols, int count,
                               std::span<Real> dx);

/// Numerically stable -[y log s(z) + (1-y) log(1 - s(z))].
template <class Real>
Real bce_loss(Real logit, int label);

/// d bce / d logit = sigmoid(logit) - label.
template <class Real>
Real bce_grad(Real logit, int label);

// Tensor-level conveniences with shape checking.
template <class Real>
Tensor<Real> linear_forward(const Tensor<Real>& x, const Tensor<Real>& W, const Tensor<Real>& b);

template <class Real>
Tensor<Real> conv1d_forward(const Tensor<Real>& x, const Tensor<Real>& K, const Tensor<Real>& b);

/// Uniform(-sqrt(6 / fan_in), +sqrt(6 / fan_in)); stddev sqrt(2 / fan_in).
template <class Real>
void kaiming_uniform(std::span<Real> w, int fan_in, Rng& rng);

/// Uniform(-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))).
template <class Real>
void xavier_uniform(std::span<Real> w, int fan_in, int fan_out, Rng& rng);

}  // namespace halunet
