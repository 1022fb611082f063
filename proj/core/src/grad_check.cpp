#include "osxr/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "osxr/error.hpp"

namespace osxr {

template <class T>
GradCheckResult grad_check(const std::function<BasicTensor<T>()>& f, std::vector<BasicTensor<T>> inputs, double eps) {
  if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.clear_grad();
  }
  // Every intermediate is rebuilt by f(), so only the inputs carry state.
  auto loss = f();
  backward(loss);
  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) {
    analytic.emplace_back(in.grad().begin(), in.grad().end());
    in.clear_grad();
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      const T plus = static_cast<T>(original + eps);
      const T minus = static_cast<T>(original - eps);
      values[i] = plus;
      const double f_plus = static_cast<double>(f().item());
      values[i] = minus;
      const double f_minus = static_cast<double>(f().item());
      values[i] = original;
      // Divide by the step actually representable in T.
      const double numeric = (f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
      const double a = static_cast<double>(analytic[k][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error || (k == 0 && i == 0)) {
        result = {rel, k, i, a, numeric};
      }
    }
  }
  return result;
}

template GradCheckResult grad_check(const std::function<BasicTensor<float>()>&, std::vector<BasicTensor<float>>,
                                    double);
template GradCheckResult grad_check(const std::function<BasicTensor<double>()>&, std::vector<BasicTensor<double>>,
                                    double);

}  // namespace osxr
