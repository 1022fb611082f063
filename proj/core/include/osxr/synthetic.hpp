#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "osxr/dataset.hpp"
#include "osxr/image.hpp"

namespace osxr {

struct SyntheticConfig {
  std::vector<std::string> categories{"hbar", "vbar", "blob"};
  std::size_t n_per_category = 20;
  double noise_level = 0.1;  // pixel noise stddev as a fraction of full scale
  std::uint64_t seed = 0;
  std::size_t size = 64;

  void validate() const;
};

/// One image of a known synthetic category ("hbar", "vbar" or "blob") with
/// randomized position and extent plus additive Gaussian pixel noise.
Image synthetic_image(const std::string& category, std::size_t size, double noise_level, std::uint64_t seed);

/// Writes images/<id>.pgm and manifest.tsv under `out_dir` (split unassigned,
/// source real) and returns the manifest. Deterministic per seed.
DatasetManifest gen_synthetic(const std::filesystem::path& out_dir, const SyntheticConfig& cfg);

}  // namespace osxr
