#pragma once

// Finite-difference checks over every differentiable op, the composite layers
// and the full embedding network. Shared by the unit tests and the acceptance
// binary.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "osxr/grad_check.hpp"
#include "osxr/layers.hpp"
#include "osxr/ops.hpp"
#include "osxr/siamese.hpp"

namespace osxr::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

using D = BasicTensor<double>;

inline D rand_d(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return D::of(std::move(shape), Uniform{lo, hi, seed});
}

/// Uniform magnitudes in [0.2, 1] with random signs: keeps kinks of relu,
/// leaky relu and abs out of the finite-difference stencil.
inline D rand_away_from_zero(Shape shape, std::uint64_t seed) {
  auto t = rand_d(std::move(shape), seed, 0.2, 1.0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  for (auto& v : t.mutable_data()) v = (rng() & 1) ? v : -v;
  return t;
}

/// A fixed random projection turns any tensor into a scalar with a
/// nontrivial gradient everywhere.
inline D project(const D& y, std::uint64_t seed) {
  return sum(mul(y, rand_d(y.shape(), seed ^ 0xabcdefu)));
}

// Small enough that the +-eps stencil almost never straddles a relu kink or
// a max-pool near-tie inside the networks; double keeps rounding far below it.
inline constexpr double kGradEps = 1e-6;

inline std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto unary = [&cases](std::string name, Shape shape, bool away, std::function<D(const D&)> op) {
    cases.push_back({std::move(name), [shape, away, op](std::uint64_t seed) {
                       auto x = away ? rand_away_from_zero(shape, seed) : rand_d(shape, seed);
                       return grad_check<double>([&] { return project(op(x), seed); }, {x}, kGradEps);
                     }});
  };
  auto binary = [&cases](std::string name, Shape sa, Shape sb, std::function<D(const D&, const D&)> op) {
    cases.push_back({std::move(name), [sa, sb, op](std::uint64_t seed) {
                       auto a = rand_d(sa, seed);
                       auto b = rand_d(sb, seed + 7777);
                       return grad_check<double>([&] { return project(op(a, b), seed); }, {a, b}, kGradEps);
                     }});
  };

  binary("add", {2, 3}, {2, 3}, [](const D& a, const D& b) { return add(a, b); });
  binary("sub", {2, 3}, {2, 3}, [](const D& a, const D& b) { return sub(a, b); });
  binary("mul", {2, 3}, {2, 3}, [](const D& a, const D& b) { return mul(a, b); });
  unary("scale", {4}, false, [](const D& x) { return scale(x, -1.5); });
  unary("add_scalar", {4}, false, [](const D& x) { return add_scalar(x, 0.3); });
  unary("abs", {2, 4}, true, [](const D& x) { return abs(x); });
  binary("matmul", {3, 4}, {4, 2}, [](const D& a, const D& b) { return matmul(a, b); });
  binary("matmul_chain", {2, 3}, {3, 3}, [](const D& a, const D& b) { return matmul(matmul(a, b), b); });
  binary("bias_add_2d", {3, 4}, {4}, [](const D& a, const D& b) { return bias_add(a, b); });
  binary("bias_add_4d", {2, 3, 2, 2}, {3}, [](const D& a, const D& b) { return bias_add(a, b); });
  binary("conv2d_s1_p1", {2, 2, 6, 6}, {3, 2, 3, 3},
         [](const D& a, const D& b) { return conv2d(a, b, std::size_t{1}, std::size_t{1}); });
  binary("conv2d_s2_p0", {2, 2, 8, 8}, {2, 2, 3, 3},
         [](const D& a, const D& b) { return conv2d(a, b, std::size_t{2}, std::size_t{0}); });
  cases.push_back({"conv2d_bias", [](std::uint64_t seed) {
                     auto x = rand_d({1, 2, 5, 5}, seed);
                     auto w = rand_d({2, 2, 3, 3}, seed + 1);
                     auto b = rand_d({2}, seed + 2);
                     return grad_check<double>([&] { return project(conv2d(x, w, b, 1, 1), seed); }, {x, w, b},
                                               kGradEps);
                   }});
  unary("max_pool2d", {2, 2, 8, 8}, false, [](const D& x) { return max_pool2d(x, 2, 2); });
  unary("max_pool2d_overlap", {1, 2, 6, 6}, false, [](const D& x) { return max_pool2d(x, 3, 1); });
  unary("upsample_nearest2d", {1, 2, 3, 3}, false, [](const D& x) { return upsample_nearest2d(x, 2); });
  unary("relu", {2, 5}, true, [](const D& x) { return relu(x); });
  unary("leaky_relu", {2, 5}, true, [](const D& x) { return activation(x, Activation::leaky_relu(0.2)); });
  unary("sigmoid", {2, 5}, false, [](const D& x) { return sigmoid(x); });
  unary("tanh", {2, 5}, false, [](const D& x) { return activation(x, Activation::tanh()); });
  cases.push_back({"reduce_sum", [](std::uint64_t seed) {
                     auto x = rand_d({3, 4}, seed);
                     return grad_check<double>([&] { return sum(mul(x, x)); }, {x}, kGradEps);
                   }});
  cases.push_back({"reduce_mean", [](std::uint64_t seed) {
                     auto x = rand_d({3, 4}, seed);
                     return grad_check<double>([&] { return mean(mul(x, x)); }, {x}, kGradEps);
                   }});
  unary("reshape", {2, 6}, false, [](const D& x) { return reshape(x, {3, 4}); });
  unary("flatten", {2, 2, 2, 2}, false, [](const D& x) { return flatten(x); });
  binary("concat_channels", {2, 1, 3, 3}, {2, 2, 3, 3}, [](const D& a, const D& b) { return concat_channels(a, b); });
  binary("mask_channels", {2, 3, 4, 4}, {2, 1, 4, 4}, [](const D& a, const D& b) { return mask_channels(a, b); });
  binary("pairwise_distance", {3, 5}, {3, 5}, [](const D& a, const D& b) { return pairwise_distance(a, b); });
  cases.push_back({"bce_with_logits", [](std::uint64_t seed) {
                     auto x = rand_d({6, 1}, seed, -3.0, 3.0);
                     std::vector<double> targets{0, 1, 1, 0, 0.25, 0.9};
                     return grad_check<double>(
                         [&] { return bce_with_logits(x, std::span<const double>(targets)); }, {x}, kGradEps);
                   }});

  cases.push_back({"dense_layer", [](std::uint64_t seed) {
                     auto layer = BasicDenseLayer<double>::create(5, 3, seed);
                     auto x = rand_d({2, 5}, seed + 3);
                     return grad_check<double>([&] { return project(dense_forward(layer, x), seed); },
                                               {x, layer.weight, layer.bias}, kGradEps);
                   }});
  cases.push_back({"conv_block", [](std::uint64_t seed) {
                     auto block = BasicConvBlock<double>::create(2, 3, 3, Activation::sigmoid(), 1, PoolSpec{2, 2},
                                                                  seed);
                     auto x = rand_d({2, 2, 6, 6}, seed + 3);
                     return grad_check<double>([&] { return project(conv_block_forward(block, x), seed); },
                                               {x, block.kernel, block.bias}, kGradEps);
                   }});
  cases.push_back({"attention_gate", [](std::uint64_t seed) {
                     auto gate = BasicAttentionGate<double>::create(3, 2, 4, seed);
                     // a bias offset keeps most pre-relu activations away from the kink
                     for (auto& v : gate.bias.mutable_data()) v = 0.5;
                     auto x = rand_d({2, 3, 4, 4}, seed + 3);
                     auto g = rand_d({2, 2, 4, 4}, seed + 4);
                     return grad_check<double>(
                         [&] {
                           auto out = attention_gate(gate, x, g);
                           return add(project(out.gated, seed), project(out.alpha, seed + 1));
                         },
                         {x, g, gate.wx, gate.wg, gate.psi, gate.bias}, kGradEps);
                   }});
  cases.push_back({"embedding_network", [](std::uint64_t seed) {
                     EmbeddingConfig cfg;
                     cfg.input_size = 8;
                     cfg.channels = {2, 3};
                     cfg.hidden = 6;
                     cfg.latent_dim = 4;
                     cfg.seed = seed;
                     BasicEmbeddingNetwork<double> net(cfg);
                     auto images = rand_d({2, 1, 8, 8}, seed + 3, 0.0, 1.0);
                     auto inputs = net.parameters();
                     inputs.push_back(images);
                     return grad_check<double>(
                         [&] {
                           auto out = net.forward_with_attention(images);
                           return add(project(out.embedding, seed), project(out.alpha, seed + 1));
                         },
                         inputs, kGradEps);
                   }});
  cases.push_back({"siamese_pair_energy", [](std::uint64_t seed) {
                     EmbeddingConfig cfg;
                     cfg.input_size = 8;
                     cfg.channels = {2, 3};
                     cfg.hidden = 6;
                     cfg.latent_dim = 4;
                     cfg.seed = seed;
                     BasicEmbeddingNetwork<double> net(cfg);
                     auto x1 = rand_d({2, 1, 8, 8}, seed + 3, 0.0, 1.0);
                     auto x2 = rand_d({2, 1, 8, 8}, seed + 4, 0.0, 1.0);
                     auto inputs = net.parameters();
                     return grad_check<double>(
                         [&] {
                           auto d = pairwise_distance(net.forward(x1), net.forward(x2));
                           return sum(mul(d, d));
                         },
                         inputs, kGradEps);
                   }});
  return cases;
}

struct GradSuiteRow {
  std::string name;
  double worst = 0.0;
  std::uint64_t worst_seed = 0;
};

/// Runs every case at seeds [0, n_seeds) and keeps the worst error per case.
inline std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t n_seeds = 10) {
  std::vector<GradSuiteRow> rows;
  for (const auto& c : gradient_cases()) {
    GradSuiteRow row{c.name, 0.0, 0};
    for (std::uint64_t s = 0; s < n_seeds; ++s) {
      const auto r = c.run(1000 + s);
      if (r.max_relative_error >= row.worst) {
        row.worst = r.max_relative_error;
        row.worst_seed = 1000 + s;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace osxr::testing
