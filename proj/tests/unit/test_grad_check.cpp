#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "grad_suite.hpp"
#include "osxr/error.hpp"

using namespace osxr;
using osxr::testing::rand_d;

TEST_CASE("sum has an exact constant gradient") {
  auto x = osxr::testing::random_tensor<float>({3, 4}, 2);
  auto r = grad_check<float>([&] { return sum(x); }, {x}, 1e-3);
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("matmul chain within 1e-3") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = rand_d({2, 3}, seed);
    auto b = rand_d({3, 4}, seed + 1);
    auto c = rand_d({4, 2}, seed + 2);
    auto r = grad_check<double>([&] { return sum(matmul(matmul(a, b), c)); }, {a, b, c}, 1e-3);
    CHECK(r.max_relative_error <= 1e-3);
  }
}

TEST_CASE("conv2d loss within 1e-2 at eps 1e-3") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = rand_d({1, 1, 5, 5}, seed);
    auto w = rand_d({2, 1, 3, 3}, seed + 10);
    auto r = grad_check<double>([&] { return mean(mul(conv2d(x, w, 1, 1), conv2d(x, w, 1, 1))); }, {x, w}, 1e-3);
    CHECK(r.max_relative_error <= 1e-2);
  }
}

TEST_CASE("grad_check leaves inputs and gradients clean") {
  auto x = rand_d({4}, 3);
  const std::vector<double> before(x.data().begin(), x.data().end());
  grad_check<double>([&] { return sum(mul(x, x)); }, {x}, 1e-3);
  CHECK_FALSE(x.has_grad());
  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == before);
  CHECK_THROWS_AS(grad_check<double>([&] { return sum(x); }, {x}, 0.0), DomainError);
}

TEST_CASE("a wrong adjoint is detected") {
  // y = x^2 with a deliberately halved derivative.
  auto bad_square = [](const BasicTensor<double>& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= v;
    return detail::make_result<double>(x.shape(), std::move(out), "bad_square", {x}, [](detail::Node<double>& n) {
      auto* gx = n.input_grad(0);
      if (!gx) return;
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] * n.inputs[0]->data[i];
    });
  };
  auto x = rand_d({3}, 5, 0.5, 1.0);
  auto r = grad_check<double>([&] { return sum(bad_square(x)); }, {x}, 1e-3);
  CHECK(r.max_relative_error > 0.4);
}

TEST_CASE("every differentiable op and the embedding network pass at 10 seeds") {
  for (const auto& row : osxr::testing::run_gradient_suite(10)) {
    INFO(row.name << " worst " << row.worst << " at seed " << row.worst_seed);
    CHECK(row.worst <= 1e-2);
  }
}
