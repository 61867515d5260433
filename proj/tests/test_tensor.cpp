// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ppgnas/adam.hpp"
#include "ppgnas/error.hpp"
#include "ppgnas/ops.hpp"
#include "support.hpp"

using namespace ppgnas;
using namespace testsupport;

namespace {

Tensor t(Shape s, std::vector<float> v, bool g = false) { return Tensor::from(std::move(s), std::move(v), g); }

std::vector<float> vec(const Tensor& x) { return {x.data().begin(), x.data().end()}; }

// Direct convolution loops, independent of the library kernels.
std::vector<double> naive_conv(const std::vector<float>& x, std::size_t N, std::size_t Ci, std::size_t L,
                               const std::vector<float>& w, std::size_t Co, std::size_t K, const std::vector<float>& b,
                               std::size_t stride, std::size_t pad, std::size_t& Lo) {
  Lo = (L + 2 * pad - K) / stride + 1;
  std::vector<double> y(N * Co * Lo, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t o = 0; o < Lo; ++o) {
        double acc = b.empty() ? 0.0 : b[co];
        for (std::size_t ci = 0; ci < Ci; ++ci)
          for (std::size_t k = 0; k < K; ++k) {
            const long p = static_cast<long>(o * stride + k) - static_cast<long>(pad);
            if (p >= 0 && p < static_cast<long>(L))
              acc += static_cast<double>(w[(co * Ci + ci) * K + k]) * x[(n * Ci + ci) * L + static_cast<std::size_t>(p)];
          }
        y[(n * Co + co) * Lo + o] = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("conv1d identity kernel") {
  auto y = ops::conv1d(t({1, 1, 3}, {1, 2, 3}), t({1, 1, 1}, {1}), t({1}, {0}), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 3});
  CHECK(vec(y) == std::vector<float>{1, 2, 3});
}

TEST_CASE("conv1d sum plus bias") {
  auto y = ops::conv1d(t({1, 1, 3}, {1, 2, 3}), t({1, 1, 3}, {1, 1, 1}), t({1}, {1}), 1, 0);
  CHECK(vec(y) == std::vector<float>{7});
}

TEST_CASE("conv1d matches naive loops") {
  std::mt19937_64 rng(1);
  auto x = randnf(rng, 2 * 4 * 16), w = randnf(rng, 8 * 4 * 3), b = randnf(rng, 8);
  auto y = ops::conv1d(t({2, 4, 16}, x), t({8, 4, 3}, w), t({8}, b), 2, 1);
  CHECK(y.shape() == Shape{2, 8, 8});
  std::size_t lo = 0;
  auto ref = naive_conv(x, 2, 4, 16, w, 8, 3, b, 2, 1, lo);
  REQUIRE(lo == 8);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(y.data()[i] - ref[i]) < 1e-5);
}

TEST_CASE("conv1d geometry errors") {
  CHECK_THROWS_AS(ops::conv1d(t({1, 1, 2}, {1, 2}), t({1, 1, 5}, {1, 1, 1, 1, 1}), Tensor(), 1, 0), Error);
  CHECK_THROWS_AS(ops::conv1d(t({1, 2, 2}, {1, 2, 3, 4}), t({1, 1, 1}, {1}), Tensor(), 1, 0), Error);
}

TEST_CASE("depthwise per-channel scaling") {
  auto y = ops::depthwise_conv1d(t({1, 2, 3}, {1, 2, 3, 4, 5, 6}), t({2, 1, 1}, {1, 2}), t({2}, {0, 0}), 1, 0);
  CHECK(vec(y) == std::vector<float>{1, 2, 3, 8, 10, 12});
}

TEST_CASE("depthwise all-ones K=3") {
  auto y = ops::depthwise_conv1d(t({1, 2, 3}, {1, 2, 3, 2, 4, 6}), t({2, 1, 3}, {1, 1, 1, 1, 1, 1}), Tensor(), 1, 0);
  CHECK(vec(y) == std::vector<float>{6, 12});
}

TEST_CASE("depthwise matches naive per-channel loops") {
  std::mt19937_64 rng(2);
  auto x = randnf(rng, 8 * 32), w = randnf(rng, 8 * 3);
  auto y = ops::depthwise_conv1d(t({1, 8, 32}, x), t({8, 1, 3}, w), Tensor(), 1, 1);
  REQUIRE(y.shape() == Shape{1, 8, 32});
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t o = 0; o < 32; ++o) {
      double acc = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        const long p = static_cast<long>(o + k) - 1;
        if (p >= 0 && p < 32) acc += static_cast<double>(w[c * 3 + k]) * x[c * 32 + static_cast<std::size_t>(p)];
      }
      CHECK(std::fabs(y.data()[c * 32 + o] - acc) < 1e-5);
    }
}

TEST_CASE("elementwise examples") {
  CHECK(vec(ops::relu(t({3}, {-1, 0, 2}))) == std::vector<float>{0, 0, 2});
  CHECK(vec(ops::add(t({2}, {1, 2}), t({2}, {3, 4}))) == std::vector<float>{4, 6});
  CHECK(vec(ops::upsample2(t({1, 1, 2}, {1, 2}))) == std::vector<float>{1, 1, 2, 2});
  CHECK_THROWS_AS(ops::add(t({2}, {1, 2}), t({3}, {1, 2, 3})), Error);
}

TEST_CASE("pooling examples") {
  CHECK(vec(ops::max_pool1d(t({1, 1, 4}, {1, 5, 3, 2}), 2, 2)) == std::vector<float>{5, 3});
  CHECK(vec(ops::avg_pool1d(t({1, 1, 4}, {1, 5, 3, 2}), 2, 2)) == std::vector<float>{3, 2.5f});
  CHECK(vec(ops::global_avg_pool(t({1, 2, 2}, {1, 3, 2, 6}))) == std::vector<float>{2, 4});
  CHECK(vec(ops::concat_channels(t({1, 1, 2}, {1, 2}), t({1, 2, 2}, {3, 4, 5, 6}))) ==
        std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("gradient of a linear form") {
  auto w = t({3}, {0.5f, -1, 2}, true);
  auto x = t({3}, {1, 2, 3});
  backward(ops::sum(ops::mul(w, x)));
  REQUIRE(w.has_grad());
  CHECK(std::vector<float>(w.grad().begin(), w.grad().end()) == std::vector<float>{1, 2, 3});
}

TEST_CASE("frozen tensor receives no gradient") {
  auto w = t({3}, {1, 1, 1}, true);
  auto x = t({3}, {1, 2, 3}, false);
  backward(ops::sum(ops::mul(w, x)));
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("second backward on the same loss is an error") {
  auto w = t({2}, {1, 2}, true);
  auto loss = ops::sum(ops::mul(w, w));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), Error);
}

TEST_CASE("no-grad guard records no history") {
  auto w = t({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard g;
    y = ops::mul(w, w);
  }
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("mse of conv matches finite differences") {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t ci = uniform(rng, 1, 3), co = uniform(rng, 1, 3), k = uniform(rng, 1, 4), l = uniform(rng, 6, 10);
    auto x = leaf64(rng, {2, ci, l}), w = leaf64(rng, {co, ci, k}), b = leaf64(rng, {co});
    const std::size_t lo = l - k + 1;
    auto y = Tensor64::from({2, co, lo}, randn(rng, 2 * co * lo));
    const double err = grad_check({x, w, b}, [&](const std::vector<Tensor64>& p) {
      return ops::mse(ops::conv1d(p[0], p[1], p[2], 1, 0), y);
    });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("adam first step closed form") {
  auto p = t({1}, {1.0f}, true);
  AdamState st;
  st.lr = 1e-3f;
  p.node()->grad = {0.5f};
  adam_step(p, st);
  // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
  const double expect = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
  CHECK(std::fabs(p.data()[0] - expect) < 1e-7);
  CHECK(std::fabs(p.data()[0] - 0.999) < 1e-6);
}

TEST_CASE("adam zero gradient leaves the parameter") {
  auto p = t({2}, {1.0f, -2.0f}, true);
  AdamState st;
  p.node()->grad = {0.0f, 0.0f};
  adam_step(p, st);
  CHECK(p.data()[0] == 1.0f);
  CHECK(p.data()[1] == -2.0f);
}

TEST_CASE("adam two steps match the hand-unrolled recurrence") {
  auto p = t({1}, {0.3f}, true);
  AdamState st;
  st.lr = 0.01f;
  double ref = 0.3, m = 0, v = 0;
  for (int step = 1; step <= 2; ++step) {
    p.node()->grad = {1.0f};
    adam_step(p, st);
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double mh = m / (1 - std::pow(0.9, step)), vh = v / (1 - std::pow(0.999, step));
    ref -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(std::fabs(p.data()[0] - ref) < 1e-7);
}

TEST_CASE("adam without gradient is a state error; optimizer skips it") {
  auto p = t({1}, {1.0f}, true);
  AdamState st;
  CHECK_THROWS_AS(adam_step(p, st), Error);
  auto q = t({1}, {2.0f}, true);
  Adam opt({p, q}, 0.1f);
  backward(ops::sum(ops::mul(q, q)));
  opt.step();
  CHECK(p.data()[0] == 1.0f);
  CHECK(q.data()[0] < 2.0f);
}
