#include <cmath>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "osxr/error.hpp"
#include "osxr/ops.hpp"

using namespace osxr;
using osxr::testing::random_tensor;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Straightforward loops; shares no code with the library kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += double(a[i * k + p]) * double(b[p * n + j]);
  return out;
}

std::vector<double> naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(N * O * Ho * Wo, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t r = 0; r < Ho; ++r)
        for (std::size_t c = 0; c < Wo; ++c) {
          double acc = 0;
          for (std::size_t ch = 0; ch < C; ++ch)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long rr = long(r * stride + i) - long(pad), cc = long(c * stride + j) - long(pad);
                if (rr < 0 || cc < 0 || rr >= long(H) || cc >= long(W)) continue;
                acc += double(x[((n * C + ch) * H + rr) * W + cc]) * double(w[((o * C + ch) * kh + i) * kw + j]);
              }
          out[((n * O + o) * Ho + r) * Wo + c] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("matmul examples") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(values(matmul(a, eye)) == values(a));
  auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(a, b)) == std::vector<float>{19, 22, 43, 50});
  CHECK(values(matmul(a, tensor_of({2, 3}, Zeros{}))) == std::vector<float>(6, 0.0f));
  CHECK_THROWS_AS(matmul(a, tensor_of({3, 2}, Zeros{})), ShapeError);
}

TEST_CASE("matmul agrees with a triple loop") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t m = 1 + seed % 5, k = 2 + seed % 7, n = 1 + (seed * 3) % 6;
    auto a = random_tensor<float>({m, k}, seed);
    auto b = random_tensor<float>({k, n}, seed + 50);
    auto got = matmul(a, b);
    auto want = naive_matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("matmul is associative within 1e-4") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const std::size_t m = 1 + seed % 8, k = 1 + (seed * 5) % 8, l = 1 + (seed * 3) % 8, n = 1 + (seed * 7) % 8;
    auto a = random_tensor<float>({m, k}, seed);
    auto b = random_tensor<float>({k, l}, seed + 1000);
    auto c = random_tensor<float>({l, n}, seed + 2000);
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.numel(); ++i) CHECK(std::abs(left[i] - right[i]) <= 1e-4);
  }
}

TEST_CASE("conv2d sliding-window example") {
  auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto k = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 1});
  auto y = conv2d(x, k);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(values(y) == std::vector<float>{6, 8, 12, 14});
}

TEST_CASE("conv2d with identity and zero kernels") {
  auto x = random_tensor<float>({2, 1, 5, 4}, 3);
  CHECK(values(conv2d(x, Tensor::from({1, 1, 1, 1}, {1}))) == values(x));
  auto z = conv2d(x, tensor_of({3, 1, 3, 3}, Zeros{}), 1, 1);
  CHECK(values(z) == std::vector<float>(z.numel(), 0.0f));
}

TEST_CASE("conv2d matches the direct definition across strides and padding") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t stride = 1 + seed % 2, pad = seed % 3, k = 1 + seed % 3;
    auto x = random_tensor<float>({2, 2, 7, 6}, seed);
    auto w = random_tensor<float>({3, 2, k, k}, seed + 9);
    auto y = conv2d(x, w, stride, pad);
    const std::size_t Ho = (7 + 2 * pad - k) / stride + 1, Wo = (6 + 2 * pad - k) / stride + 1;
    CHECK(y.shape() == Shape{2, 3, Ho, Wo});
    auto want = naive_conv(x, w, stride, pad);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d bias and shape errors") {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 1, 1, 1});
  auto k = Tensor::from({2, 1, 1, 1}, {1, 2});
  auto b = Tensor::from({2}, {10, 20});
  CHECK(values(conv2d(x, k, b)) == std::vector<float>{11, 11, 11, 11, 22, 22, 22, 22});
  CHECK_THROWS_AS(conv2d(x, tensor_of({1, 1, 3, 3}, Zeros{})), ShapeError);
  CHECK_NOTHROW(conv2d(x, tensor_of({1, 1, 3, 3}, Zeros{}), 1, 1));
  CHECK_THROWS_AS(conv2d(x, tensor_of({1, 2, 1, 1}, Zeros{})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, k, Tensor::from({3}, {0, 0, 0})), ShapeError);
}

TEST_CASE("max_pool2d values and tie routing") {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(values(max_pool2d(x, 2, 2)) == std::vector<float>{4});

  auto c = tensor_of({1, 2, 4, 4}, Constant{3});
  CHECK(values(max_pool2d(c, 2, 2)) == std::vector<float>(8, 3.0f));

  auto t = Tensor::from({1, 1, 2, 2}, {1, 5, 5, 2});
  t.set_requires_grad(true);
  auto y = max_pool2d(t, 2, 2);
  CHECK(y.item() == 5);
  backward(sum(y));
  CHECK(std::vector<float>(t.grad().begin(), t.grad().end()) == std::vector<float>{0, 1, 0, 0});

  CHECK_THROWS_AS(max_pool2d(x, 3, 1), ShapeError);
}

TEST_CASE("upsample repeats pixels") {
  auto x = Tensor::from({1, 1, 1, 2}, {1, 2});
  auto y = upsample_nearest2d(x, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 4});
  CHECK(values(y) == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("activation definitions") {
  auto x = Tensor::from({3}, {0, -3, -2});
  CHECK(sigmoid(x)[0] == doctest::Approx(0.5));
  CHECK(relu(x)[1] == 0);
  CHECK(activation(x, Activation::leaky_relu(0.1))[2] == doctest::Approx(-0.2));
  CHECK(activation(x, Activation::tanh())[0] == 0);
  CHECK_THROWS_AS(activation(x, Activation::leaky_relu(1.5)), DomainError);
  CHECK_THROWS_AS(activation(x, Activation::leaky_relu(0.0)), DomainError);

  auto wide = random_tensor<float>({200}, 5, -30, 30);
  auto squashed = sigmoid(wide);
  for (float v : squashed.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("reductions") {
  CHECK(sum(Tensor::from({3}, {1, 2, 3})).item() == 6);
  CHECK(mean(Tensor::from({2}, {2, 4})).item() == 3);
  CHECK(sum(tensor_of({5}, Zeros{})).item() == 0);
  CHECK_THROWS_AS(sum(Tensor{}), DomainError);
}

TEST_CASE("elementwise helpers") {
  auto a = Tensor::from({3}, {1, -2, 3});
  auto b = Tensor::from({3}, {4, 5, -6});
  CHECK(values(add(a, b)) == std::vector<float>{5, 3, -3});
  CHECK(values(sub(a, b)) == std::vector<float>{-3, -7, 9});
  CHECK(values(mul(a, b)) == std::vector<float>{4, -10, -18});
  CHECK(values(scale(a, 2.0)) == std::vector<float>{2, -4, 6});
  CHECK(values(add_scalar(a, 1.0)) == std::vector<float>{2, -1, 4});
  CHECK(values(abs(a)) == std::vector<float>{1, 2, 3});
  CHECK_THROWS_AS(add(a, Tensor::from({2}, {1, 2})), ShapeError);
}

TEST_CASE("bias_add, reshape, flatten, concat and mask") {
  auto x = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(bias_add(x, Tensor::from({2}, {10, 20}))) == std::vector<float>{11, 22, 13, 24});
  CHECK(reshape(x, {4}).shape() == Shape{4});
  CHECK_THROWS_AS(reshape(x, {3}), ShapeError);
  CHECK(flatten(tensor_of({2, 3, 2, 2}, Zeros{})).shape() == Shape{2, 12});

  auto a = tensor_of({1, 1, 2, 2}, Constant{1});
  auto b = tensor_of({1, 2, 2, 2}, Constant{2});
  auto cat = concat_channels(a, b);
  CHECK(cat.shape() == Shape{1, 3, 2, 2});
  CHECK(values(cat) == std::vector<float>{1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2});

  auto m = Tensor::from({1, 1, 2, 2}, {0, 0.5f, 1, 2});
  auto masked = mask_channels(b, m);
  CHECK(values(masked) == std::vector<float>{0, 1, 2, 4, 0, 1, 2, 4});
  CHECK_THROWS_AS(mask_channels(b, tensor_of({1, 1, 3, 2}, Zeros{})), ShapeError);
}

TEST_CASE("pairwise distance is a row-wise euclidean norm") {
  auto a = Tensor::from({2, 2}, {3, 4, 1, 1});
  auto b = Tensor::from({2, 2}, {0, 0, 1, 1});
  auto d = pairwise_distance(a, b);
  CHECK(d[0] == doctest::Approx(5));
  CHECK(d[1] == 0);

  // zero distance has a zero, finite gradient
  auto x = Tensor::from({1, 2}, {1, 1});
  x.set_requires_grad(true);
  backward(sum(pairwise_distance(x, Tensor::from({1, 2}, {1, 1}))));
  for (float g : x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("bce with logits matches the direct formula") {
  auto logits = Tensor::from({4, 1}, {-2, 0, 1.5f, 8});
  const std::vector<float> targets{0, 1, 1, 0};
  double want = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = 1 / (1 + std::exp(-double(logits[i])));
    want -= targets[i] * std::log(p) + (1 - targets[i]) * std::log(1 - p);
  }
  want /= 4;
  CHECK(bce_with_logits(logits, std::span<const float>(targets)).item() == doctest::Approx(want).epsilon(1e-5));
  const std::vector<float> short_targets{1};
  CHECK_THROWS_AS(bce_with_logits(logits, std::span<const float>(short_targets)), ShapeError);
}

TEST_CASE("clamp_values is not recorded") {
  auto x = Tensor::from({3}, {-1, 0.5f, 2});
  x.set_requires_grad(true);
  auto y = clamp_values(x, 0.0f, 1.0f);
  CHECK(values(y) == std::vector<float>{0, 0.5f, 1});
  CHECK_FALSE(y.requires_grad());
}
