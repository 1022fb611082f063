#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "osxr/checkpoint.hpp"
#include "osxr/dagan.hpp"
#include "osxr/dataset.hpp"
#include "osxr/inference.hpp"
#include "osxr/layers.hpp"
#include "osxr/metrics.hpp"

namespace osxr {

/// Fully resolved settings for the training and evaluation stages.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint;  // empty -> data_dir/model.osxr
  std::uint64_t seed = 42;

  double test_frac = 0.2;
  double val_frac = 0.0;

  EmbeddingConfig embedding;
  DaganConfig dagan;
  GanTrainConfig gan;
  std::size_t dagan_steps = 300;
  std::size_t dagan_batch = 8;
  std::size_t k_augment = 2;

  std::size_t epochs = 20;
  std::size_t n_pairs = 600;
  double like_fraction = 0.5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double margin = 2.0;

  std::size_t std_k = 10;
  std::vector<std::string> std_ids;  // explicit standard set when non-empty

  double z = kZ99;
  std::string listen = "127.0.0.1:8080";

  std::filesystem::path manifest_path() const { return data_dir / "manifest.tsv"; }
  std::filesystem::path checkpoint_path() const { return checkpoint.empty() ? data_dir / "model.osxr" : checkpoint; }

  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto `base`.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& file, RunConfig base);
};

/// Assigns splits when any real record is still unassigned and saves the manifest.
DatasetManifest ensure_split(const RunConfig& cfg);

struct DaganStageResult {
  std::uint64_t version = 0;
  std::vector<double> d_losses;
  std::vector<double> g_losses;
};

/// Trains the DAGAN on real train images and stores it in the checkpoint.
/// Writes `<checkpoint>.dagan_loss.csv` with columns step,loss,d_loss,g_loss
/// (loss = d_loss + g_loss).
DaganStageResult train_dagan_stage(const RunConfig& cfg);

/// Replaces previously generated records with k fresh variants per real
/// train image, written under data_dir/generated. Returns the number added.
std::size_t augment_stage(const RunConfig& cfg);

struct SiameseStageResult {
  std::uint64_t version = 0;
  std::vector<double> epoch_losses;
  StandardSet standard;
};

/// Trains the embedding network on every train-split sample, then selects the
/// standard set from real train images. Writes `<checkpoint>.loss.csv`
/// (step,loss) and `<checkpoint>.run.json`.
SiameseStageResult train_siamese_stage(const RunConfig& cfg);

struct EvaluationResult {
  EvalReport report;
  DissimilarityReport dissimilarity;
  std::vector<std::string> predictions;
  std::vector<std::string> truths;
};

/// Scores the real test split only. Writes `<checkpoint>.eval.json`.
EvaluationResult evaluate_stage(const RunConfig& cfg);

Diagnosis diagnose_file(const RunConfig& cfg, const std::filesystem::path& image);

/// Splits of a manifest loaded with pixels, relative to the manifest directory.
std::vector<ImageSample> load_split(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                    Split split, bool real_only);

void write_loss_csv(const std::filesystem::path& file, const std::vector<std::vector<double>>& columns,
                    const std::vector<std::string>& names);

}  // namespace osxr
