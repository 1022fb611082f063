#include "osxr/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "osxr/error.hpp"
#include "osxr/image.hpp"

namespace osxr {

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw DomainError("contrastive margin must be positive");
}

double energy(std::span<const float> z1, std::span<const float> z2) {
  if (z1.size() != z2.size()) {
    throw ShapeError("energy: latent lengths differ (" + std::to_string(z1.size()) + " vs " +
                     std::to_string(z2.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    const double d = static_cast<double>(z1[i]) - static_cast<double>(z2[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

double contrastive_loss(double d, int y, const LossConfig& cfg) {
  if (y != kLikePair && y != kUnlikePair) throw DomainError("pair label must be 0 or 1, got " + std::to_string(y));
  if (!(d >= 0.0)) throw DomainError("energy must be non-negative");
  cfg.validate();
  if (y == kLikePair) return d * d;
  const double hinge = std::max(0.0, cfg.margin - d);
  return hinge * hinge;
}

Tensor contrastive_loss_sum(const Tensor& z1, const Tensor& z2, std::span<const int> labels, const LossConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw DomainError("contrastive loss over an empty batch");
  if (z1.rank() != 2 || z1.extent(0) != labels.size()) {
    throw ShapeError("contrastive_loss_sum: " + std::to_string(labels.size()) + " labels for embeddings " +
                     shape_str(z1.shape()));
  }
  std::vector<float> like(labels.size()), unlike(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kLikePair && labels[i] != kUnlikePair) {
      throw DomainError("pair label must be 0 or 1, got " + std::to_string(labels[i]));
    }
    unlike[i] = static_cast<float>(labels[i]);
    like[i] = 1.0f - unlike[i];
  }
  const Shape s{labels.size()};
  auto d = pairwise_distance(z1, z2);
  auto like_term = mul(mul(d, d), Tensor::from(s, std::move(like)));
  auto hinge = relu(add_scalar(scale(d, -1.0), cfg.margin));
  auto unlike_term = mul(mul(hinge, hinge), Tensor::from(s, std::move(unlike)));
  return sum(add(like_term, unlike_term));
}

namespace {

void stack_pair_side(std::span<const PairSample> pairs, Tensor& left, Tensor& right, std::vector<int>& labels) {
  std::vector<Tensor> a, b;
  a.reserve(pairs.size());
  b.reserve(pairs.size());
  labels.clear();
  for (const auto& p : pairs) {
    a.push_back(p.x1);
    b.push_back(p.x2);
    labels.push_back(p.y);
  }
  left = stack_batch(a);
  right = stack_batch(b);
}

}  // namespace

Tensor batch_loss(std::span<const PairSample> pairs, const EmbeddingNetwork& net, const LossConfig& cfg) {
  if (pairs.empty()) throw DomainError("batch_loss: empty batch");
  SiameseNetwork twins(net);
  Tensor left, right;
  std::vector<int> labels;
  stack_pair_side(pairs, left, right, labels);
  return contrastive_loss_sum(twins.twin_a().forward(left), twins.twin_b().forward(right), labels, cfg);
}

double train_epoch(std::span<const PairSample> pairs, EmbeddingNetwork& net, const LossConfig& cfg,
                   Optimizer& optimizer, const EpochOptions& options) {
  if (pairs.empty()) throw DomainError("train_epoch: no pairs");
  if (options.batch_size == 0) throw DomainError("train_epoch: batch size must be at least 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto params = net.parameters();
  double total = 0.0;
  std::vector<PairSample> batch;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const std::size_t end = std::min(order.size(), start + options.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);
    auto loss = batch_loss(batch, net, cfg);
    total += static_cast<double>(loss.item());
    backward(loss);
    optimizer.step(params);
  }
  return total / static_cast<double>(pairs.size());
}

double evaluate_pairs(std::span<const PairSample> pairs, const EmbeddingNetwork& net, const LossConfig& cfg,
                      std::size_t batch_size) {
  if (pairs.empty()) throw DomainError("evaluate_pairs: no pairs");
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    total += static_cast<double>(batch_loss(pairs.subspan(start, end - start), net, cfg).item());
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace osxr
