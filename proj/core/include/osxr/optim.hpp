#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "osxr/tensor.hpp"

namespace osxr {

enum class OptimizerKind { sgd, adam };

/// First-order optimizer state. Adam moments are allocated on the first step
/// and tied to parameter position, so every step must see the same list.
class Optimizer {
 public:
  static constexpr double kDefaultSgdRate = 1e-2;
  static constexpr double kDefaultAdamRate = 1e-3;

  static Optimizer sgd(double learning_rate = kDefaultSgdRate);
  static Optimizer adam(double learning_rate = kDefaultAdamRate, double beta1 = 0.9, double beta2 = 0.999,
                        double epsilon = 1e-8);

  /// Applies one update to every parameter and clears their gradients.
  /// Throws ContractError if any parameter lacks a gradient.
  void step(std::span<Tensor> params);

  OptimizerKind kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr);
  std::uint64_t steps() const noexcept { return t_; }
  bool has_moments() const noexcept { return kind_ == OptimizerKind::adam; }

 private:
  Optimizer(OptimizerKind kind, double lr, double b1, double b2, double eps);

  OptimizerKind kind_;
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

/// Same as Optimizer::step; named after the operation it performs.
inline void optimizer_step(Optimizer& state, std::span<Tensor> params) { state.step(params); }

}  // namespace osxr
