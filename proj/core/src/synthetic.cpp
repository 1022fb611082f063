#include "osxr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "osxr/error.hpp"
#include "osxr/layers.hpp"

namespace osxr {

namespace {

constexpr double kBackground = 30.0;
constexpr double kForeground = 200.0;

}  // namespace

void SyntheticConfig::validate() const {
  if (categories.empty()) throw DomainError("gen-synthetic: no categories");
  for (const auto& c : categories) {
    if (c != "hbar" && c != "vbar" && c != "blob") throw DomainError("gen-synthetic: unknown category '" + c + "'");
  }
  if (n_per_category < 1) throw DomainError("gen-synthetic: n must be at least 1");
  if (!(noise_level >= 0.0)) throw DomainError("gen-synthetic: noise_level must be nonnegative");
  if (size < 16) throw DomainError("gen-synthetic: size must be at least 16");
}

Image synthetic_image(const std::string& category, std::size_t size, double noise_level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double s = static_cast<double>(size);
  std::vector<double> plane(size * size, kBackground);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  if (category == "hbar" || category == "vbar") {
    const double thickness = uniform(0.10, 0.20) * s;
    const double centre = uniform(0.30, 0.70) * s;
    const double margin = uniform(0.0, 0.15) * s;
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double across = category == "hbar" ? r + 0.5 : c + 0.5;
        const double along = category == "hbar" ? c + 0.5 : r + 0.5;
        if (std::abs(across - centre) <= thickness / 2 && along >= margin && along <= s - margin) {
          plane[r * size + c] = kForeground;
        }
      }
    }
  } else if (category == "blob") {
    const double cy = uniform(0.40, 0.60) * s;
    const double cx = uniform(0.40, 0.60) * s;
    const double sigma = uniform(0.10, 0.16) * s;
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double dy = r + 0.5 - cy, dx = c + 0.5 - cx;
        plane[r * size + c] += (kForeground - kBackground) * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      }
    }
  } else {
    throw DomainError("synthetic_image: unknown category '" + category + "'");
  }

  Image img{size, size, std::vector<std::uint8_t>(size * size)};
  std::normal_distribution<double> noise(0.0, noise_level * 255.0);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double v = plane[i] + (noise_level > 0.0 ? noise(rng) : 0.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return img;
}

DatasetManifest gen_synthetic(const std::filesystem::path& out_dir, const SyntheticConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  DatasetManifest manifest;
  for (std::size_t ci = 0; ci < cfg.categories.size(); ++ci) {
    const auto& category = cfg.categories[ci];
    for (std::size_t i = 0; i < cfg.n_per_category; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", category.c_str(), i);
      const auto rel = std::filesystem::path("images") / (std::string(id) + ".pgm");
      const auto seed = derive_seed(cfg.seed, ci * 1'000'003 + i);
      write_pgm(out_dir / rel, synthetic_image(category, cfg.size, cfg.noise_level, seed));
      manifest.records.push_back({id, rel.generic_string(), category, Source::real, Split::unassigned});
    }
  }
  manifest.save(out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace osxr
