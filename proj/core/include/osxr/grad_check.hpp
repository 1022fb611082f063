#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "osxr/tensor.hpp"

namespace osxr {

struct GradCheckResult {
  double max_relative_error = 0.0;
  // Location of the worst element.
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() gradients of the scalar `f()` against central
/// differences, perturbing every element of every input by +-eps.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
///
/// `f` must rebuild its graph from `inputs` on each call. Existing gradients
/// on the inputs are cleared first and again on return.
template <class T>
GradCheckResult grad_check(const std::function<BasicTensor<T>()>& f, std::vector<BasicTensor<T>> inputs, double eps);

}  // namespace osxr
