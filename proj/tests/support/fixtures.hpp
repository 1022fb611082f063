#pragma once

// Small shared helpers for the test executables.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "osxr/dagan.hpp"
#include "osxr/dataset.hpp"
#include "osxr/image.hpp"
#include "osxr/layers.hpp"
#include "osxr/synthetic.hpp"

namespace osxr::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "osxr") {
    static std::atomic<unsigned> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline EmbeddingConfig tiny_embedding(std::size_t size = 16, std::uint64_t seed = 1) {
  EmbeddingConfig c;
  c.input_size = size;
  c.channels = {4, 8};
  c.hidden = 16;
  c.latent_dim = 8;
  c.seed = seed;
  return c;
}

inline DaganConfig tiny_dagan(std::size_t size = 16, std::uint64_t seed = 7) {
  DaganConfig c;
  c.input_size = size;
  c.channels = {4, 8};
  c.latent_dim = 8;
  c.seed = seed;
  return c;
}

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  Image img{w, h, std::vector<std::uint8_t>(w * h)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return img;
}

/// In-memory synthetic samples named "<category>_<i>".
inline std::vector<ImageSample> synthetic_samples(const std::vector<std::string>& categories, std::size_t n,
                                                  std::size_t size, double noise, std::uint64_t seed,
                                                  Split split = Split::train) {
  std::vector<ImageSample> out;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      ImageSample s;
      s.id = categories[c] + "_" + std::to_string(i);
      s.pixels = synthetic_image(categories[c], size, noise, derive_seed(seed, c * 100000 + i));
      s.category = categories[c];
      s.split = split;
      out.push_back(std::move(s));
    }
  }
  return out;
}

template <class T>
BasicTensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return BasicTensor<T>::of(std::move(shape), Uniform{lo, hi, seed});
}

}  // namespace osxr::testing
