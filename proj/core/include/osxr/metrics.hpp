#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace osxr {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.576;

/// Wald half-width z * sqrt(p (1 - p) / n).
double wald_half_width(double p, std::size_t n, double z = kZ99);

struct AccuracyCI {
  std::size_t n = 0;
  double accuracy = 0.0;
  double half_width = 0.0;
  double z = kZ99;
};

/// Throws ShapeError on length mismatch and DomainError on empty input.
AccuracyCI accuracy_and_ci(std::span<const std::string> predictions, std::span<const std::string> truths,
                           double z = kZ99);

struct ConfusionStats {
  std::vector<std::string> categories;
  std::vector<std::vector<std::size_t>> matrix;  // [truth][prediction]
  std::vector<double> sensitivity;               // NaN when a category never occurs as truth
  std::vector<double> specificity;               // NaN when every sample has that truth
  std::size_t n = 0;

  std::size_t count(const std::string& truth, const std::string& predicted) const;
  std::size_t trace() const;
};

/// Throws DomainError when a label is not one of `categories`.
ConfusionStats confusion_stats(std::span<const std::string> predictions, std::span<const std::string> truths,
                               std::span<const std::string> categories);

struct EvalReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double ci_half_width = 0.0;
  double z = kZ99;
  ConfusionStats confusion;

  std::string to_text() const;
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport make_eval_report(std::span<const std::string> predictions, std::span<const std::string> truths,
                            std::span<const std::string> categories, double z = kZ99);

}  // namespace osxr
