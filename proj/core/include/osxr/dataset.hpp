#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "osxr/image.hpp"
#include "osxr/layers.hpp"
#include "osxr/siamese.hpp"

namespace osxr {

enum class Source { real, generated, user };
enum class Split { train, val, test, standard, unassigned };

std::string_view to_string(Source source);
std::string_view to_string(Split split);
Source parse_source(std::string_view text);
Split parse_split(std::string_view text);

struct ImageSample {
  std::string id;
  Image pixels;
  std::string category;
  Source source = Source::real;
  Split split = Split::unassigned;
};

struct ManifestRecord {
  std::string id;
  std::string path;  // relative to the manifest's directory unless absolute
  std::string category;
  Source source = Source::real;
  Split split = Split::unassigned;
};

/// Line-delimited `id<TAB>path<TAB>category<TAB>source<TAB>split`, no header.
class DatasetManifest {
 public:
  std::vector<ManifestRecord> records;

  static DatasetManifest parse(std::string_view text);
  static DatasetManifest load(const std::filesystem::path& file);
  std::string serialize() const;
  /// Writes through a temporary file and renames it into place.
  void save(const std::filesystem::path& file) const;

  /// Throws DomainError on duplicate ids, empty categories, or generated
  /// records placed outside the train split.
  void validate() const;
  std::map<std::string, std::size_t> category_counts() const;
  std::vector<std::string> categories() const;
  const ManifestRecord* find(std::string_view id) const;
};

/// Loads the pixels of every record accepted by `keep` (all when empty).
std::vector<ImageSample> load_samples(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                      const std::function<bool(const ManifestRecord&)>& keep = {});

/// Per category, round(test_frac * n) real samples go to test by seeded
/// shuffle, then round(val_frac * remainder) to val, the rest to train.
/// Generated and user samples always land in train.
DatasetManifest stratified_split(DatasetManifest manifest, double test_frac, double val_frac, std::uint64_t seed);

struct PairConfig {
  std::size_t n_pairs = 600;
  double like_fraction = 0.5;
  std::uint64_t seed = 0;
  std::size_t input_size = 64;
};

/// Samples round(like_fraction * n_pairs) same-category pairs (y = 0) and the
/// rest cross-category (y = 1). A sample is never paired with itself.
std::vector<PairSample> make_pairs(std::span<const ImageSample> samples, const PairConfig& cfg);

/// Every unordered pair of distinct samples, labelled by category.
std::vector<PairSample> all_pairs(std::span<const ImageSample> samples, std::size_t input_size);

struct StandardMember {
  std::string id;
  std::vector<float> latent;
};

/// Per category, the ordered exemplars every query is compared against.
struct StandardSet {
  std::map<std::string, std::vector<StandardMember>> by_category;

  bool empty() const noexcept { return by_category.empty(); }
  std::size_t size() const noexcept;
  std::vector<std::string> categories() const;
  std::vector<std::string> member_ids() const;
};

/// Embeds samples in minibatches with recording disabled.
std::vector<std::vector<float>> embed_samples(std::span<const ImageSample> samples, const EmbeddingNetwork& net,
                                              std::size_t batch_size = 32);

/// Picks standard-set members and moves them to Split::standard.
///
/// Explicit mode takes `explicit_ids` verbatim, in order. Automatic mode takes,
/// per category, the k real train samples with the lowest mean energy to the
/// other candidates of that category. Latents are computed with `net`.
StandardSet select_standard_set(std::vector<ImageSample>& samples, std::size_t k_per_category,
                                const std::optional<std::vector<std::string>>& explicit_ids,
                                const EmbeddingNetwork& net);

/// Recomputes member latents with `net`; `samples` must contain every member.
void refresh_latents(StandardSet& set, std::span<const ImageSample> samples, const EmbeddingNetwork& net);

}  // namespace osxr
