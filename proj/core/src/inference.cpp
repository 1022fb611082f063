#include "osxr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "osxr/error.hpp"
#include "osxr/siamese.hpp"

namespace osxr {

ClassEnergies class_energies_from_latent(std::span<const float> query_latent, const StandardSet& standard) {
  if (standard.empty()) throw DomainError("class_energies: standard set is empty");
  ClassEnergies out;
  for (const auto& [category, members] : standard.by_category) {
    if (members.empty()) throw DomainError("class_energies: category '" + category + "' has no members");
    auto& list = out.members[category];
    double total = 0.0;
    for (const auto& m : members) {
      const double e = energy(query_latent, m.latent);
      list.push_back(e);
      total += e;
    }
    out.mean[category] = total / static_cast<double>(members.size());
  }
  return out;
}

ClassEnergies class_energies(const Tensor& query, const StandardSet& standard, const EmbeddingNetwork& net) {
  NoGradGuard no_grad;
  if (query.rank() != 4 || query.extent(0) != 1) {
    throw ShapeError("class_energies: expected a single image [1,1,S,S], got " + shape_str(query.shape()));
  }
  const auto z = net.forward(query);
  return class_energies_from_latent(z.data(), standard);
}

std::string argmin_category(const std::map<std::string, double>& means) {
  if (means.empty()) throw DomainError("argmin_category: no categories");
  auto best = means.begin();
  for (auto it = std::next(means.begin()); it != means.end(); ++it)
    if (it->second < best->second) best = it;
  return best->first;
}

Diagnosis diagnose(const Image& query, const StandardSet& standard, const EmbeddingNetwork& net,
                   std::uint64_t checkpoint_version, bool with_attention) {
  NoGradGuard no_grad;
  const std::size_t s = net.config().input_size;
  const auto x = normalize_resize(query, s, s);
  const auto out = net.forward_with_attention(x);
  auto ce = class_energies_from_latent(out.embedding.data(), standard);
  Diagnosis d;
  d.predicted_category = argmin_category(ce.mean);
  d.per_category_mean_energy = std::move(ce.mean);
  d.per_member_energies = std::move(ce.members);
  d.checkpoint_version = checkpoint_version;
  if (with_attention) {
    const auto& a = out.alpha;
    auto map = resize_bilinear(a.data(), a.extent(2), a.extent(3), s, s);
    for (auto& v : map) v = std::clamp(v, 0.0f, 1.0f);
    d.attention_map = std::move(map);
    d.attention_height = s;
    d.attention_width = s;
  }
  return d;
}

std::vector<std::string> predict_categories(std::span<const ImageSample> samples, const StandardSet& standard,
                                            const EmbeddingNetwork& net) {
  const auto latents = embed_samples(samples, net);
  std::vector<std::string> out;
  out.reserve(latents.size());
  for (const auto& z : latents) out.push_back(argmin_category(class_energies_from_latent(z, standard).mean));
  return out;
}

EnergyStats summarize(std::span<const double> values) {
  EnergyStats s;
  if (values.empty()) return s;
  s.count = values.size();
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  return s;
}

DissimilarityReport dissimilarity_report(std::span<const ImageSample> test, const StandardSet& standard,
                                         const EmbeddingNetwork& net) {
  if (test.empty()) throw DomainError("dissimilarity_report: empty test set");
  const auto latents = embed_samples(test, net);
  std::vector<double> like, unlike;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto ce = class_energies_from_latent(latents[i], standard);
    for (const auto& [category, energies] : ce.members) {
      auto& bucket = category == test[i].category ? like : unlike;
      bucket.insert(bucket.end(), energies.begin(), energies.end());
    }
  }
  DissimilarityReport r;
  r.like = summarize(like);
  r.unlike = summarize(unlike);
  if (r.like.mean > 0.0) {
    r.mean_ratio = r.unlike.mean / r.like.mean;
  } else {
    r.mean_ratio = r.unlike.mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return r;
}

std::string to_text(const Diagnosis& d) {
  std::string out = "predicted: " + d.predicted_category + "\ncheckpoint_version: " +
                    std::to_string(d.checkpoint_version) + "\nmean energy per category:\n";
  char buf[128];
  for (const auto& [category, e] : d.per_category_mean_energy) {
    std::snprintf(buf, sizeof buf, "  %-16s %.4f\n", category.c_str(), e);
    out += buf;
  }
  return out;
}

std::string to_text(const DissimilarityReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "like   n=%zu min=%.4f max=%.4f mean=%.4f\n"
                "unlike n=%zu min=%.4f max=%.4f mean=%.4f\n"
                "mean ratio %.3f, ranges %s\n",
                r.like.count, r.like.min, r.like.max, r.like.mean, r.unlike.count, r.unlike.min, r.unlike.max,
                r.unlike.mean, r.mean_ratio, r.separated() ? "separated" : "overlapping");
  return buf;
}

}  // namespace osxr
