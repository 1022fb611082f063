#include "osxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "osxr/error.hpp"

namespace osxr {

double wald_half_width(double p, std::size_t n, double z) {
  if (n == 0) throw DomainError("wald_half_width: n must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("wald_half_width: p must lie in [0,1]");
  if (!(z >= 0.0)) throw DomainError("wald_half_width: z must be nonnegative");
  return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

AccuracyCI accuracy_and_ci(std::span<const std::string> predictions, std::span<const std::string> truths, double z) {
  if (predictions.size() != truths.size()) {
    throw ShapeError("accuracy_and_ci: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(truths.size()) + " truths");
  }
  if (truths.empty()) throw DomainError("accuracy_and_ci: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) correct += predictions[i] == truths[i];
  AccuracyCI r;
  r.n = truths.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  r.half_width = wald_half_width(r.accuracy, r.n, z);
  r.z = z;
  return r;
}

std::size_t ConfusionStats::count(const std::string& truth, const std::string& predicted) const {
  auto index = [this](const std::string& c) {
    auto it = std::find(categories.begin(), categories.end(), c);
    if (it == categories.end()) throw DomainError("confusion: unknown category '" + c + "'");
    return static_cast<std::size_t>(it - categories.begin());
  };
  return matrix[index(truth)][index(predicted)];
}

std::size_t ConfusionStats::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < matrix.size(); ++i) t += matrix[i][i];
  return t;
}

ConfusionStats confusion_stats(std::span<const std::string> predictions, std::span<const std::string> truths,
                               std::span<const std::string> categories) {
  if (predictions.size() != truths.size()) throw ShapeError("confusion_stats: length mismatch");
  ConfusionStats cs;
  cs.categories.assign(categories.begin(), categories.end());
  const std::size_t k = cs.categories.size();
  cs.matrix.assign(k, std::vector<std::size_t>(k, 0));
  auto index = [&](const std::string& c) {
    auto it = std::find(cs.categories.begin(), cs.categories.end(), c);
    if (it == cs.categories.end()) throw DomainError("confusion_stats: unknown category '" + c + "'");
    return static_cast<std::size_t>(it - cs.categories.begin());
  };
  for (std::size_t i = 0; i < truths.size(); ++i) ++cs.matrix[index(truths[i])][index(predictions[i])];
  cs.n = truths.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = cs.matrix[c][c], fn = 0, fp = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      fn += cs.matrix[c][j];
      fp += cs.matrix[j][c];
    }
    const std::size_t tn = cs.n - tp - fn - fp;
    cs.sensitivity.push_back(tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : nan);
    cs.specificity.push_back(tn + fp ? static_cast<double>(tn) / static_cast<double>(tn + fp) : nan);
  }
  return cs;
}

EvalReport make_eval_report(std::span<const std::string> predictions, std::span<const std::string> truths,
                            std::span<const std::string> categories, double z) {
  const auto ci = accuracy_and_ci(predictions, truths, z);
  EvalReport r;
  r.n = ci.n;
  r.accuracy = ci.accuracy;
  r.ci_half_width = ci.half_width;
  r.z = z;
  r.confusion = confusion_stats(predictions, truths, categories);
  return r;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::string out = "n = " + std::to_string(n) + "\naccuracy = " + fixed(100.0 * accuracy, 2) + "% +/- " +
                    fixed(100.0 * ci_half_width, 2) + "% (z = " + fixed(z, 3) + ")\n";
  std::size_t width = 13;
  for (const auto& c : confusion.categories) width = std::max(width, c.size() + 2);
  auto pad = [width](std::string s) {
    s.resize(std::max(s.size(), width), ' ');
    return s;
  };
  out += "\nconfusion (rows = truth, columns = prediction)\n" + pad("");
  for (const auto& c : confusion.categories) out += pad(c);
  out += "\n";
  for (std::size_t i = 0; i < confusion.categories.size(); ++i) {
    out += pad(confusion.categories[i]);
    for (auto v : confusion.matrix[i]) out += pad(std::to_string(v));
    out += "\n";
  }
  out += "\n" + pad("category") + pad("sensitivity") + pad("specificity") + "\n";
  for (std::size_t i = 0; i < confusion.categories.size(); ++i) {
    out += pad(confusion.categories[i]) + pad(fixed(confusion.sensitivity[i], 4)) +
           pad(fixed(confusion.specificity[i], 4)) + "\n";
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_category = nlohmann::json::object();
  for (std::size_t i = 0; i < confusion.categories.size(); ++i) {
    per_category[confusion.categories[i]] = {{"sensitivity", number_or_null(confusion.sensitivity[i])},
                                             {"specificity", number_or_null(confusion.specificity[i])}};
  }
  return {{"n", n},
          {"accuracy", accuracy},
          {"ci_half_width", ci_half_width},
          {"z", z},
          {"categories", confusion.categories},
          {"confusion", confusion.matrix},
          {"per_category", per_category}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n = j.at("n").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.ci_half_width = j.at("ci_half_width").get<double>();
  r.z = j.at("z").get<double>();
  r.confusion.categories = j.at("categories").get<std::vector<std::string>>();
  r.confusion.matrix = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.confusion.n = r.n;
  for (const auto& c : r.confusion.categories) {
    const auto& pc = j.at("per_category").at(c);
    r.confusion.sensitivity.push_back(number_from(pc.at("sensitivity")));
    r.confusion.specificity.push_back(number_from(pc.at("specificity")));
  }
  return r;
}

}  // namespace osxr
