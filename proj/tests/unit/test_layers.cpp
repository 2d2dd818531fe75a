#include <doctest.h>

#include <cmath>
#include <vector>

#include "halunet/layers.hpp"
#include "halunet/rng.hpp"

using namespace halunet;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Direct sliding window: y[t,o] = b[o] + sum_c sum_k K[o,c,k] x[t+k-1,c].
std::vector<double> conv_oracle(const std::vector<double>& x, int len, int c_in,
                                const std::vector<double>& K, const std::vector<double>& b,
                                int c_out) {
  std::vector<double> y(static_cast<std::size_t>(len) * c_out);
  for (int t = 0; t < len; ++t) {
    for (int o = 0; o < c_out; ++o) {
      double acc = b[o];
      for (int c = 0; c < c_in; ++c) {
        for (int k = 0; k < 3; ++k) {
          const int s = t + k - 1;
          if (s < 0 || s >= len) continue;
          acc += K[(o * c_in + c) * 3 + k] * x[s * c_in + c];
        }
      }
      y[t * c_out + o] = acc;
    }
  }
  return y;
}

}  // namespace

TEST_CASE("linear: identity, zero input, naive oracle") {
  std::vector<double> x{1, 2, 3, 4, 5, 6};  // 2 x 3
  std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::vector<double> zero_b(3, 0.0);
  std::vector<double> y(6);
  linear_forward<double>(x, 2, 3, eye, zero_b, 3, y);
  CHECK(y == x);

  std::vector<double> zx(6, 0.0), b{0.5, -1.0, 2.0};
  linear_forward<double>(zx, 2, 3, eye, b, 3, y);
  CHECK(y == std::vector<double>{0.5, -1.0, 2.0, 0.5, -1.0, 2.0});

  Rng rng(4);
  const auto W = random_vec(rng, 12);  // 4 x 3
  const auto bb = random_vec(rng, 4);
  const auto xx = random_vec(rng, 6);
  std::vector<double> out(8);
  linear_forward<double>(xx, 2, 3, W, bb, 4, out);
  for (int n = 0; n < 2; ++n) {
    for (int o = 0; o < 4; ++o) {
      double acc = bb[o];
      for (int i = 0; i < 3; ++i) acc += xx[n * 3 + i] * W[o * 3 + i];
      CHECK(out[n * 4 + o] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("linear tensor overload checks shapes") {
  Tensor<float> x({2, 3}), W({4, 3}), b({4}), badW({4, 2});
  CHECK(linear_forward(x, W, b).shape == Shape{2, 4});
  CHECK_THROWS_AS(linear_forward(x, badW, b), Error);
}

TEST_CASE("conv1d: identity kernel, zero input, sliding-window oracle") {
  const int len = 4, c = 2;
  std::vector<double> K(c * c * 3, 0.0);
  for (int o = 0; o < c; ++o) K[(o * c + o) * 3 + 1] = 1.0;
  std::vector<double> b(c, 0.0);
  Rng rng(5);
  const auto x = random_vec(rng, len * c);
  std::vector<double> col(len * c * 3), y(len * c);
  conv1d_forward<double>(x, len, c, K, b, c, col, y);
  CHECK(y == x);

  std::vector<double> zx(len * c, 0.0), bias{0.25, -0.75};
  conv1d_forward<double>(zx, len, c, K, bias, c, col, y);
  for (int t = 0; t < len; ++t) {
    CHECK(y[t * c] == 0.25);
    CHECK(y[t * c + 1] == -0.75);
  }

  const auto RK = random_vec(rng, c * c * 3);
  const auto rb = random_vec(rng, c);
  conv1d_forward<double>(x, len, c, RK, rb, c, col, y);
  const auto want = conv_oracle(x, len, c, RK, rb, c);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-6));

  // Non-square and float.
  std::vector<float> xf(5 * 3), Kf(4 * 3 * 3), bf(4), colf(5 * 3 * 3), yf(5 * 4);
  for (auto& v : xf) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : Kf) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : bf) v = static_cast<float>(rng.uniform(-1, 1));
  conv1d_forward<float>(xf, 5, 3, Kf, bf, 4, colf, yf);
  const auto wf = conv_oracle(std::vector<double>(xf.begin(), xf.end()), 5, 3,
                              std::vector<double>(Kf.begin(), Kf.end()),
                              std::vector<double>(bf.begin(), bf.end()), 4);
  for (std::size_t i = 0; i < yf.size(); ++i) CHECK(yf[i] == doctest::Approx(wf[i]).epsilon(1e-5));
}

TEST_CASE("softmax, sigmoid, masked mean") {
  std::vector<double> logits{0.7, 0.7, 0.7}, p(3);
  softmax<double>(logits, p);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
  std::vector<double> big{1000.0, 0.0}, q(2);
  softmax<double>(big, q);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(q[1]));

  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);

  std::vector<double> x(50, 0.0);
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  std::vector<double> out(1);
  masked_mean_pool<double>(x, 1, 3, out);
  CHECK(out[0] == 2.0);
  CHECK_THROWS_AS(masked_mean_pool<double>(x, 1, 0, out), Error);
}

TEST_CASE("bce loss and gradient") {
  CHECK(bce_loss(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.0, 0) == doctest::Approx(std::log(2.0)));
  const double far = bce_loss(-100.0, 1);
  CHECK(std::isfinite(far));
  CHECK(far == doctest::Approx(100.0));
  CHECK(bce_loss(-100.0f, 1) == doctest::Approx(100.0f));
  CHECK(bce_loss(100.0, 1) == doctest::Approx(0.0));
  CHECK(bce_grad(0.0, 1) == -0.5);
  CHECK(bce_grad(0.0, 0) == 0.5);
  for (double z : {-3.0, -0.2, 0.0, 1.5}) {
    for (int y : {0, 1}) {
      const double h = 1e-6;
      const double fd = (bce_loss(z + h, y) - bce_loss(z - h, y)) / (2 * h);
      CHECK(bce_grad(z, y) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero input through conv + relu") {
  // Weight gradients vanish (they multiply the input); bias gradients are
  // the upstream gradient summed over positions where the ReLU is open.
  const int len = 3, c_in = 2, c_out = 2;
  std::vector<double> x(len * c_in, 0.0);
  std::vector<double> K(c_out * c_in * 3, 0.3), b{0.5, -0.5};
  std::vector<double> col(len * c_in * 3), y(len * c_out);
  conv1d_forward<double>(x, len, c_in, K, b, c_out, col, y);
  relu_inplace<double>(y);
  std::vector<double> dy(len * c_out, 1.0);
  relu_backward_inplace<double>(y, dy);
  std::vector<double> dK(K.size(), 0.0), db(2, 0.0), dcol(col.size()), dx(x.size(), 0.0);
  conv1d_backward<double>(col, len, c_in, K, c_out, dy, dK, db, dcol, dx);
  for (double g : dK) CHECK(g == 0.0);
  CHECK(db[0] == 3.0);
  CHECK(db[1] == 0.0);
}

TEST_CASE("linear and conv backward match finite differences") {
  Rng rng(17);
  const int n = 3, in = 4, out = 2;
  auto x = random_vec(rng, n * in);
  auto W = random_vec(rng, out * in);
  auto b = random_vec(rng, out);
  const auto g = random_vec(rng, n * out);  // loss = <g, y>

  auto lin_loss = [&]() {
    std::vector<double> y(n * out);
    linear_forward<double>(x, n, in, W, b, out, y);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
    return s;
  };
  std::vector<double> dW(W.size(), 0.0), db(b.size(), 0.0), dx(x.size(), 0.0);
  linear_backward<double>(x, n, in, W, out, g, dW, db, dx);
  auto fd = [&](std::vector<double>& p, std::size_t i, auto&& loss) {
    const double h = 1e-6, keep = p[i];
    p[i] = keep + h;
    const double up = loss();
    p[i] = keep - h;
    const double dn = loss();
    p[i] = keep;
    return (up - dn) / (2 * h);
  };
  for (std::size_t i = 0; i < W.size(); ++i) CHECK(dW[i] == doctest::Approx(fd(W, i, lin_loss)).epsilon(1e-6));
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(db[i] == doctest::Approx(fd(b, i, lin_loss)).epsilon(1e-6));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(dx[i] == doctest::Approx(fd(x, i, lin_loss)).epsilon(1e-6));

  const int len = 5, ci = 2, co = 3;
  auto cx = random_vec(rng, len * ci);
  auto K = random_vec(rng, co * ci * 3);
  auto cb = random_vec(rng, co);
  const auto cg = random_vec(rng, len * co);
  auto conv_loss = [&]() {
    std::vector<double> col(len * ci * 3), y(len * co);
    conv1d_forward<double>(cx, len, ci, K, cb, co, col, y);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += cg[i] * y[i];
    return s;
  };
  std::vector<double> col(len * ci * 3), y(len * co);
  conv1d_forward<double>(cx, len, ci, K, cb, co, col, y);
  std::vector<double> dK(K.size(), 0.0), dcb(co, 0.0), dcol(col.size()), dcx(cx.size(), 0.0);
  conv1d_backward<double>(col, len, ci, K, co, cg, dK, dcb, dcol, dcx);
  for (std::size_t i = 0; i < K.size(); ++i) CHECK(dK[i] == doctest::Approx(fd(K, i, conv_loss)).epsilon(1e-6));
  for (std::size_t i = 0; i < cb.size(); ++i) CHECK(dcb[i] == doctest::Approx(fd(cb, i, conv_loss)).epsilon(1e-6));
  for (std::size_t i = 0; i < cx.size(); ++i) CHECK(dcx[i] == doctest::Approx(fd(cx, i, conv_loss)).epsilon(1e-6));
}

TEST_CASE("kaiming uniform spread over 10 seeds") {
  // Uniform(-a, a) with a = sqrt(6 / fan_in) has stddev a / sqrt(3) = sqrt(2 / fan_in).
  const double want = std::sqrt(2.0 / 64.0);
  const double bound = std::sqrt(6.0 / 64.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<double> w(64 * 64);
    kaiming_uniform<double>(w, 64, rng);
    double mean = 0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0;
    for (double v : w) {
      var += (v - mean) * (v - mean);
      CHECK(std::abs(v) <= bound);
    }
    const double sd = std::sqrt(var / static_cast<double>(w.size()));
    CHECK(std::abs(sd - want) / want < 0.2);
  }
}
