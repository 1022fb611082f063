#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osxr/dataset.hpp"
#include "osxr/layers.hpp"
#include "osxr/optim.hpp"
#include "osxr/tensor.hpp"

namespace osxr {

struct DaganConfig {
  std::size_t input_size = 64;
  std::vector<std::size_t> channels{8, 16, 32};  // one stride-2 conv per entry
  std::size_t latent_dim = 64;
  double noise_scale = 0.5;
  double leaky_slope = 0.2;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Encoder: stride-2 conv stack (leaky relu) -> dense to the latent.
/// Decoder: dense -> reshape -> per level nearest x2 upsample + 3x3 conv (relu)
/// -> 3x3 conv to one channel with sigmoid.
class DaganGenerator {
 public:
  explicit DaganGenerator(DaganConfig config = {});

  const DaganConfig& config() const noexcept { return config_; }
  double noise_scale() const noexcept { return config_.noise_scale; }

  /// [N,1,S,S] -> [N,latent_dim]
  Tensor encode(const Tensor& images) const;
  /// [N,latent_dim] -> [N,1,S,S] with values in (0,1).
  Tensor decode(const Tensor& latent) const;
  /// decode(encode(x) + noise_scale * noise). Differentiable, not clamped.
  Tensor forward(const Tensor& images, const Tensor& noise) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;

  /// Set once at least one training step has run (or a trained checkpoint was loaded).
  bool trained() const noexcept { return trained_; }
  void mark_trained(bool value = true) noexcept { trained_ = value; }

 private:
  DaganConfig config_;
  std::vector<ConvBlock> encoder_;
  DenseLayer to_latent_;
  DenseLayer from_latent_;
  std::vector<ConvBlock> decoder_;
  ConvBlock to_image_;
  bool trained_ = false;
};

/// Same-class discriminator over the channel concatenation (reference, candidate).
class DaganDiscriminator {
 public:
  explicit DaganDiscriminator(DaganConfig config = {});

  const DaganConfig& config() const noexcept { return config_; }

  /// [N,1,S,S] x2 -> [N,1] raw logits.
  Tensor logits(const Tensor& reference, const Tensor& candidate) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;

 private:
  DaganConfig config_;
  std::vector<ConvBlock> convs_;
  DenseLayer head_;
};

/// Standard-normal noise of shape [n, latent_dim].
Tensor sample_noise(std::size_t n, std::size_t latent_dim, std::uint64_t seed);

/// decode(encode(x) + sigma * noise), clamped to [0,1]. No graph is recorded.
Tensor generate(const DaganGenerator& gen, const Tensor& images, const Tensor& noise);

/// Probability that `candidate` is a genuine image of the reference's category,
/// strictly inside (0,1). Inputs are [1,1,S,S] or batched [N,1,S,S]; returns one value per row.
std::vector<double> discriminate(const DaganDiscriminator& disc, const Tensor& reference, const Tensor& candidate);

struct GanTrainConfig {
  double gen_learning_rate = 1e-3;
  double disc_learning_rate = 1e-3;
  double beta1 = 0.5;
  double l1_weight = 0.1;
  std::uint64_t noise_seed = 11;
};

struct GanTrainState {
  Optimizer gen_optimizer;
  Optimizer disc_optimizer;
  GanTrainConfig config;
  std::uint64_t steps = 0;
  std::vector<double> d_losses;
  std::vector<double> g_losses;

  explicit GanTrainState(const GanTrainConfig& cfg = {});
};

struct GanStepLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

/// One discriminator update followed by one generator update on a batch of
/// same-category images [B,1,S,S], B >= 2. Row i is conditioned on row (i+1) mod B.
GanStepLosses dagan_train_step(GanTrainState& state, DaganGenerator& gen, DaganDiscriminator& disc,
                               const Tensor& batch);

struct GanLoopOptions {
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

/// Runs `steps` train steps, each on a random same-category batch drawn from
/// the real train samples. Categories with fewer than two samples are skipped.
void train_dagan(GanTrainState& state, DaganGenerator& gen, DaganDiscriminator& disc,
                 std::span<const ImageSample> samples, const GanLoopOptions& options);

/// Appends k generated variants per input sample. Variants keep the category,
/// are tagged Source::generated / Split::train, and are named "<id>~gen<j>".
/// Throws StateError for an untrained generator and DomainError for inputs in
/// the test, val or standard splits.
std::vector<ImageSample> augment_dataset(const DaganGenerator& gen, std::span<const ImageSample> samples,
                                         std::size_t k, std::uint64_t seed);

}  // namespace osxr
