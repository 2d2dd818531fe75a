#include "halunet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace halunet {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("shape mismatch: ") + what);
}

// Eight independent partial sums so the compiler can vectorize the loop
// without reassociating; the summation order is fixed.
template <class Real>
Real dot(const Real* a, const Real* b, int n) {
  Real acc[8] = {};
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
  }
  for (; j < n; ++j) acc[0] += a[j] * b[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class Real>
void axpy(Real alpha, const Real* x, Real* y, int n) {
  for (int j = 0; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class Real>
void linear_forward(std::span<const Real> x, int n, int in, std::span<const Real> W,
                    std::span<const Real> b, int out, std::span<Real> y) {
  require(x.size() == static_cast<std::size_t>(n) * in, "linear input");
  require(W.size() == static_cast<std::size_t>(out) * in, "linear weight");
  require(b.empty() || b.size() == static_cast<std::size_t>(out), "linear bias");
  require(y.size() == static_cast<std::size_t>(n) * out, "linear output");
  for (int i = 0; i < n; ++i) {
    const Real* xi = x.data() + static_cast<std::size_t>(i) * in;
    Real* yi = y.data() + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      yi[o] = (b.empty() ? Real{0} : b[o]) + dot(W.data() + static_cast<std::size_t>(o) * in, xi, in);
    }
  }
}

template <class Real>
void linear_backward(std::span<const Real> x, int n, int in, std::span<const Real> W, int out,
                     std::span<const Real> dy, std::span<Real> dW, std::span<Real> db,
                     std::span<Real> dx) {
  require(dy.size() == static_cast<std::size_t>(n) * out, "linear upstream gradient");
  require(dW.size() == W.size() && (db.empty() || db.size() == static_cast<std::size_t>(out)),
          "linear gradient buffers");
  const bool want_dx = !dx.empty();
  if (want_dx) require(dx.size() == x.size(), "linear input gradient");
  for (int i = 0; i < n; ++i) {
    const Real* xi = x.data() + static_cast<std::size_t>(i) * in;
    const Real* dyi = dy.data() + static_cast<std::size_t>(i) * out;
    Real* dxi = want_dx ? dx.data() + static_cast<std::size_t>(i) * in : nullptr;
    for (int o = 0; o < out; ++o) {
      const Real g = dyi[o];
      if (g == Real{0}) continue;
      if (!db.empty()) db[o] += g;
      axpy(g, xi, dW.data() + static_cast<std::size_t>(o) * in, in);
      if (want_dx) axpy(g, W.data() + static_cast<std::size_t>(o) * in, dxi, in);
    }
  }
}

template <class Real>
void im2col3(std::span<const Real> x, int len, int c_in, std::span<Real> col) {
  require(x.size() >= static_cast<std::size_t>(len) * c_in, "im2col input");
  require(col.size() == static_cast<std::size_t>(len) * c_in * kConvWidth, "im2col buffer");
  const int row = c_in * kConvWidth;
  for (int t = 0; t < len; ++t) {
    Real* dst = col.data() + static_cast<std::size_t>(t) * row;
    for (int k = 0; k < kConvWidth; ++k) {
      const int src_t = t + k - 1;
      const bool inside = src_t >= 0 && src_t < len;
      const Real* src = inside ? x.data() + static_cast<std::size_t>(src_t) * c_in : nullptr;
      for (int c = 0; c < c_in; ++c) dst[c * kConvWidth + k] = inside ? src[c] : Real{0};
    }
  }
}

template <class Real>
void col2im3_accumulate(std::span<const Real> dcol, int len, int c_in, std::span<Real> dx) {
  require(dcol.size() == static_cast<std::size_t>(len) * c_in * kConvWidth, "col2im buffer");
  require(dx.size() >= static_cast<std::size_t>(len) * c_in, "col2im output");
  const int row = c_in * kConvWidth;
  for (int t = 0; t < len; ++t) {
    const Real* src = dcol.data() + static_cast<std::size_t>(t) * row;
    for (int k = 0; k < kConvWidth; ++k) {
      const int dst_t = t + k - 1;
      if (dst_t < 0 || dst_t >= len) continue;
      Real* dst = dx.data() + static_cast<std::size_t>(dst_t) * c_in;
      for (int c = 0; c < c_in; ++c) dst[c] += src[c * kConvWidth + k];
    }
  }
}

template <class Real>
void conv1d_forward(std::span<const Real> x, int len, int c_in, std::span<const Real> K,
                    std::span<const Real> b, int c_out, std::span<Real> col, std::span<Real> y) {
  require(K.size() == static_cast<std::size_t>(c_out) * c_in * kConvWidth, "conv kernel");
  im2col3<Real>(x, len, c_in, col);
  linear_forward<Real>(col, len, c_in * kConvWidth, K, b, c_out, y);
}

template <class Real>
void conv1d_backward(std::span<const Real> col, int len, int c_in, std::span<const Real> K,
                     int c_out, std::span<const Real> dy, std::span<Real> dK, std::span<Real> db,
                     std::span<Real> dcol, std::span<Real> dx) {
  const bool want_dx = !dx.empty();
  if (want_dx) std::fill(dcol.begin(), dcol.end(), Real{0});
  linear_backward<Real>(col, len, c_in * kConvWidth, K, c_out, dy, dK, db,
                        want_dx ? dcol : std::span<Real>{});
  if (want_dx) col2im3_accumulate<Real>(dcol, len, c_in, dx);
}

template <class Real>
void relu_inplace(std::span<Real> x) {
  for (auto& v : x) v = v > Real{0} ? v : Real{0};
}

template <class Real>
void relu_backward_inplace(std::span<const Real> y, std::span<Real> dy) {
  require(y.size() == dy.size(), "relu gradient");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > Real{0})) dy[i] = Real{0};
  }
}

template <class Real>
Real sigmoid(Real x) {
  if (x >= Real{0}) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

template <class Real>
void softmax(std::span<const Real> logits, std::span<Real> out) {
  require(logits.size() == out.size() && !logits.empty(), "softmax");
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

template <class Real>
void masked_mean_pool(std::span<const Real> x, int cols, int count, std::span<Real> out) {
  if (count <= 0) throw Error("masked pooling needs true_len >= 1");
  require(x.size() >= static_cast<std::size_t>(count) * cols, "pool input");
  require(out.size() == static_cast<std::size_t>(cols), "pool output");
  std::fill(out.begin(), out.end(), Real{0});
  for (int t = 0; t < count; ++t) {
    axpy(Real{1}, x.data() + static_cast<std::size_t>(t) * cols, out.data(), cols);
  }
  const Real inv = Real{1} / static_cast<Real>(count);
  for (auto& v : out) v *= inv;
}

template <class Real>
void masked_mean_pool_backward(std::span<const Real> dout, int cols, int count,
                               std::span<Real> dx) {
  if (count <= 0) throw Error("masked pooling needs true_len >= 1");
  require(dout.size() == static_cast<std::size_t>(cols), "pool gradient");
  require(dx.size() >= static_cast<std::size_t>(count) * cols, "pool input gradient");
  const Real inv = Real{1} / static_cast<Real>(count);
  for (int t = 0; t < count; ++t) {
    axpy(inv, dout.data(), dx.data() + static_cast<std::size_t>(t) * cols, cols);
  }
}

template <class Real>
Real bce_loss(Real logit, int label) {
  // max(z, 0) - z*y + log(1 + exp(-|z|))
  const Real z = logit;
  return std::max(z, Real{0}) - z * static_cast<Real>(label) + std::log1p(std::exp(-std::abs(z)));
}

template <class Real>
Real bce_grad(Real logit, int label) {
  return sigmoid(logit) - static_cast<Real>(label);
}

template <class Real>
Tensor<Real> linear_forward(const Tensor<Real>& x, const Tensor<Real>& W, const Tensor<Real>& b) {
  require(x.shape.size() == 2 && W.shape.size() == 2 && b.shape.size() == 1, "linear rank");
  require(x.dim(1) == W.dim(1) && b.dim(0) == W.dim(0), "linear dims");
  const int n = static_cast<int>(x.dim(0));
  const int in = static_cast<int>(x.dim(1));
  const int out = static_cast<int>(W.dim(0));
  Tensor<Real> y({x.dim(0), W.dim(0)});
  linear_forward<Real>(x.span(), n, in, W.span(), b.span(), out, y.span());
  return y;
}

template <class Real>
Tensor<Real> conv1d_forward(const Tensor<Real>& x, const Tensor<Real>& K, const Tensor<Real>& b) {
  require(x.shape.size() == 2 && K.shape.size() == 3 && b.shape.size() == 1, "conv rank");
  require(K.dim(2) == kConvWidth, "conv kernel width must be 3");
  require(K.dim(1) == x.dim(1) && b.dim(0) == K.dim(0), "conv dims");
  const int len = static_cast<int>(x.dim(0));
  const int c_in = static_cast<int>(x.dim(1));
  const int c_out = static_cast<int>(K.dim(0));
  std::vector<Real> col(static_cast<std::size_t>(len) * c_in * kConvWidth);
  Tensor<Real> y({x.dim(0), K.dim(0)});
  conv1d_forward<Real>(x.span(), len, c_in, K.span(), b.span(), c_out, col, y.span());
  return y;
}

template <class Real>
void kaiming_uniform(std::span<Real> w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
}

template <class Real>
void xavier_uniform(std::span<Real> w, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
}

#define HALUNET_INSTANTIATE_LAYERS(R)                                                           \
  template void linear_forward<R>(std::span<const R>, int, int, std::span<const R>,             \
                                  std::span<const R>, int, std::span<R>);                       \
  template void linear_backward<R>(std::span<const R>, int, int, std::span<const R>, int,       \
                                   std::span<const R>, std::span<R>, std::span<R>,              \
                                   std::span<R>);                                               \
  template void im2col3<R>(std::span<const R>, int, int, std::span<R>);                         \
  template void col2im3_accumulate<R>(std::span<const R>, int, int, std::span<R>);              \
  template void conv1d_forward<R>(std::span<const R>, int, int, std::span<const R>,             \
                                  std::span<const R>, int, std::span<R>, std::span<R>);         \
  template void conv1d_backward<R>(std::span<const R>, int, int, std::span<const R>, int,       \
                                   std::span<const R>, std::span<R>, std::span<R>,              \
                                   std::span<R>, std::span<R>);                                 \
  template void relu_inplace<R>(std::span<R>);                                                  \
  template void relu_backward_inplace<R>(std::span<const R>, std::span<R>);                     \
  template R sigmoid<R>(R);                                                                     \
  template void softmax<R>(std::span<const R>, std::span<R>);                                   \
  template void masked_mean_pool<R>(std::span<const R>, int, int, std::span<R>);                \
  template void masked_mean_pool_backward<R>(std::span<const R>, int, int, std::span<R>);       \
  template R bce_loss<R>(R, int);                                                               \
  template R bce_grad<R>(R, int);                                                               \
  template Tensor<R> linear_forward<R>(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);   \
  template Tensor<R> conv1d_forward<R>(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);   \
  template void kaiming_uniform<R>(std::span<R>, int, Rng&);                                    \
  template void xavier_uniform<R>(std::span<R>, int, int, Rng&);

HALUNET_INSTANTIATE_LAYERS(float)
HALUNET_INSTANTIATE_LAYERS(double)

}  // namespace halunet
