#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osxr/dataset.hpp"
#include "osxr/image.hpp"
#include "osxr/layers.hpp"

namespace osxr {

struct ClassEnergies {
  std::map<std::string, double> mean;                 // category -> mean member energy
  std::map<std::string, std::vector<double>> members;  // category -> energies in member order
};

/// Energies of an already embedded query against the cached member latents.
/// Throws DomainError for an empty standard set.
ClassEnergies class_energies_from_latent(std::span<const float> query_latent, const StandardSet& standard);

/// Embeds query [1,1,S,S] with `net` and compares it against every member.
ClassEnergies class_energies(const Tensor& query, const StandardSet& standard, const EmbeddingNetwork& net);

/// Category with the smallest mean. Exact ties go to the lexicographically smallest name.
std::string argmin_category(const std::map<std::string, double>& means);

struct Diagnosis {
  std::string predicted_category;
  std::map<std::string, double> per_category_mean_energy;
  std::map<std::string, std::vector<double>> per_member_energies;
  std::uint64_t checkpoint_version = 0;
  std::optional<std::vector<float>> attention_map;  // row-major, attention_height x attention_width
  std::size_t attention_height = 0;
  std::size_t attention_width = 0;
};

/// Full diagnosis of one image. The attention map is the gate's alpha,
/// bilinearly resampled to the network input resolution.
Diagnosis diagnose(const Image& query, const StandardSet& standard, const EmbeddingNetwork& net,
                   std::uint64_t checkpoint_version, bool with_attention = true);

/// Predicted category per sample, embedding in minibatches.
std::vector<std::string> predict_categories(std::span<const ImageSample> samples, const StandardSet& standard,
                                            const EmbeddingNetwork& net);

struct EnergyStats {
  std::size_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

/// Energies of (test image, standard member) pairs split by whether the
/// categories match.
struct DissimilarityReport {
  EnergyStats like;
  EnergyStats unlike;
  /// unlike.mean / like.mean; infinity when like.mean is 0 and unlike.mean is not.
  double mean_ratio = 0.0;
  bool separated() const noexcept { return like.count > 0 && unlike.count > 0 && like.max < unlike.min; }
};

/// Throws DomainError for an empty test set.
DissimilarityReport dissimilarity_report(std::span<const ImageSample> test, const StandardSet& standard,
                                         const EmbeddingNetwork& net);

/// Summary statistics of a list of values (all zero when empty).
EnergyStats summarize(std::span<const double> values);

std::string to_text(const Diagnosis& d);
std::string to_text(const DissimilarityReport& r);

}  // namespace osxr
