#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "osxr/layers.hpp"
#include "osxr/optim.hpp"
#include "osxr/tensor.hpp"

namespace osxr {

/// Label convention: 0 = both images from the same category, 1 = different.
inline constexpr int kLikePair = 0;
inline constexpr int kUnlikePair = 1;

struct PairSample {
  Tensor x1;  // [1,1,S,S], values in [0,1]
  Tensor x2;
  int y = kLikePair;
  std::string id1, id2;
  std::string category1, category2;
};

/// Contrastive loss with L_S(d) = d^2 and L_D(d) = max(0, margin - d)^2.
struct LossConfig {
  double margin = 2.0;
  void validate() const;
};

/// Euclidean distance between two latent vectors.
double energy(std::span<const float> z1, std::span<const float> z2);

/// (1 - y) d^2 + y max(0, m - d)^2 for a single pair.
double contrastive_loss(double d, int y, const LossConfig& cfg);

/// Differentiable sum of per-pair contrastive losses over rows of z1, z2.
Tensor contrastive_loss_sum(const Tensor& z1, const Tensor& z2, std::span<const int> labels, const LossConfig& cfg);

/// Twin view over one embedding network. Both twins hold handles to the same
/// parameter tensors, so an update through either is seen by both.
class SiameseNetwork {
 public:
  explicit SiameseNetwork(EmbeddingNetwork net) : a_(net), b_(std::move(net)) {}

  EmbeddingNetwork& twin_a() noexcept { return a_; }
  EmbeddingNetwork& twin_b() noexcept { return b_; }
  const EmbeddingNetwork& twin_a() const noexcept { return a_; }
  const EmbeddingNetwork& twin_b() const noexcept { return b_; }

 private:
  EmbeddingNetwork a_;
  EmbeddingNetwork b_;
};

/// Sum over the pairs of the contrastive loss of their twin embeddings.
Tensor batch_loss(std::span<const PairSample> pairs, const EmbeddingNetwork& net, const LossConfig& cfg);

struct EpochOptions {
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;
};

/// One pass over `pairs` in seeded-shuffled minibatches; one optimizer step per
/// minibatch. Returns the mean per-pair loss, measured before each update.
double train_epoch(std::span<const PairSample> pairs, EmbeddingNetwork& net, const LossConfig& cfg,
                   Optimizer& optimizer, const EpochOptions& options);

/// Mean per-pair loss without updating anything.
double evaluate_pairs(std::span<const PairSample> pairs, const EmbeddingNetwork& net, const LossConfig& cfg,
                      std::size_t batch_size = 64);

}  // namespace osxr
