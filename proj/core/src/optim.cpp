#include "osxr/optim.hpp"

#include <cmath>
#include <string>

#include "osxr/error.hpp"

namespace osxr {

Optimizer::Optimizer(OptimizerKind kind, double lr, double b1, double b2, double eps)
    : kind_(kind), lr_(lr), beta1_(b1), beta2_(b2), epsilon_(eps) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be non-negative");
}

Optimizer Optimizer::sgd(double learning_rate) { return Optimizer(OptimizerKind::sgd, learning_rate, 0, 0, 0); }

Optimizer Optimizer::adam(double learning_rate, double beta1, double beta2, double epsilon) {
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw DomainError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw DomainError("adam epsilon must be positive");
  return Optimizer(OptimizerKind::adam, learning_rate, beta1, beta2, epsilon);
}

void Optimizer::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be non-negative");
  lr_ = lr;
}

void Optimizer::step(std::span<Tensor> params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractError("optimizer_step: parameter " + std::to_string(i) + " " + shape_str(params[i].shape()) +
                          " has no gradient");
    }
  }
  if (kind_ == OptimizerKind::adam) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].numel(), 0.0f);
        v_[i].assign(params[i].numel(), 0.0f);
      }
    } else if (m_.size() != params.size()) {
      throw ContractError("optimizer_step: parameter list changed between steps");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto g = params[i].grad();
    if (kind_ == OptimizerKind::sgd) {
      const float lr = static_cast<float>(lr_);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    } else {
      if (m_[i].size() != w.size()) throw ContractError("optimizer_step: parameter shape changed between steps");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * gj);
        v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] = static_cast<float>(w[j] - lr_ * mhat / (std::sqrt(vhat) + epsilon_));
      }
    }
    params[i].clear_grad();
  }
}

}  // namespace osxr
