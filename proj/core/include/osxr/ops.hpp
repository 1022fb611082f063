#pragma once

// Differentiable tensor operations. Every function here records an adjoint
// when an operand requires a gradient (see tensor.hpp).

#include <cstddef>
#include <span>

#include "osxr/tensor.hpp"

namespace osxr {

enum class ActivationKind { relu, leaky_relu, sigmoid, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.01;  // leaky_relu only; must lie in (0, 1)

  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky_relu(double slope) { return {ActivationKind::leaky_relu, slope}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
};

enum class Reduction { sum, mean };

// Elementwise arithmetic on equal shapes.
template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& x, double factor);
template <class T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, double c);
template <class T> BasicTensor<T> abs(const BasicTensor<T>& x);

/// [m,k] x [k,n] -> [m,n].
template <class T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Adds b[C] along axis 1 of x ([N,C] or [N,C,H,W]). The only broadcast supported.
template <class T> BasicTensor<T> bias_add(const BasicTensor<T>& x, const BasicTensor<T>& b);

/// Cross-correlation (no kernel flip) with zero padding.
/// input [N,C,H,W], kernel [O,C,kh,kw] -> [N,O,(H+2p-kh)/s+1,(W+2p-kw)/s+1].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride = 1,
                      std::size_t padding = 0);
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride = 1, std::size_t padding = 0);

/// Per-window maximum. Ties go to the first element in row-major order.
template <class T> BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

/// Nearest-neighbour spatial upsampling by an integer factor.
template <class T> BasicTensor<T> upsample_nearest2d(const BasicTensor<T>& input, std::size_t factor);

template <class T> BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind);
template <class T> BasicTensor<T> relu(const BasicTensor<T>& x) { return activation(x, Activation::relu()); }
template <class T> BasicTensor<T> sigmoid(const BasicTensor<T>& x) { return activation(x, Activation::sigmoid()); }

/// Full reduction to a scalar (rank-0) tensor.
template <class T> BasicTensor<T> reduce(const BasicTensor<T>& x, Reduction kind);
template <class T> BasicTensor<T> sum(const BasicTensor<T>& x) { return reduce(x, Reduction::sum); }
template <class T> BasicTensor<T> mean(const BasicTensor<T>& x) { return reduce(x, Reduction::mean); }

template <class T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
/// [N, ...] -> [N, prod(...)].
template <class T> BasicTensor<T> flatten(const BasicTensor<T>& x);

/// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W].
template <class T> BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[N,C,H,W] scaled per position by mask[N,1,H,W], shared across channels.
template <class T> BasicTensor<T> mask_channels(const BasicTensor<T>& x, const BasicTensor<T>& mask);

/// Row-wise Euclidean distance: [N,F], [N,F] -> [N]. The gradient at zero
/// distance is taken as zero.
template <class T> BasicTensor<T> pairwise_distance(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Mean binary cross-entropy of sigmoid(logits) against constant targets in [0,1].
template <class T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> targets);

/// Copies `x` with every value clamped to [lo, hi]. Not differentiable.
template <class T> BasicTensor<T> clamp_values(const BasicTensor<T>& x, T lo, T hi);

}  // namespace osxr
