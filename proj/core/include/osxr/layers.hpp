#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "osxr/ops.hpp"
#include "osxr/tensor.hpp"

namespace osxr {

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

/// Derives a per-parameter seed from a model seed and a parameter index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

template <class T>
struct BasicDenseLayer {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]

  static BasicDenseLayer create(std::size_t in, std::size_t out, std::uint64_t seed);
  std::size_t in_features() const { return weight.extent(0); }
  std::size_t out_features() const { return weight.extent(1); }
};

/// x[N,in] * W + b.
template <class T>
BasicTensor<T> dense_forward(const BasicDenseLayer<T>& layer, const BasicTensor<T>& x);

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
};

template <class T>
struct BasicConvBlock {
  BasicTensor<T> kernel;  // [out, in, k, k]
  BasicTensor<T> bias;    // [out]
  Activation act = Activation::relu();
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::optional<PoolSpec> pool;

  static BasicConvBlock create(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                               Activation act, std::size_t stride, std::optional<PoolSpec> pool, std::uint64_t seed);
};

/// conv -> activation -> optional max pool. Batch extent is preserved.
template <class T>
BasicTensor<T> conv_block_forward(const BasicConvBlock<T>& block, const BasicTensor<T>& x);

/// Additive attention gate over a feature map x, driven by a gating signal g
/// on the same spatial grid:
///   alpha = sigmoid(psi * relu(Wx * x + Wg * g + b)),   gated = alpha . x
/// All three projections are 1x1 convolutions.
template <class T>
struct BasicAttentionGate {
  BasicTensor<T> wx;    // [inter, Cx, 1, 1]
  BasicTensor<T> wg;    // [inter, Cg, 1, 1]
  BasicTensor<T> psi;   // [1, inter, 1, 1]
  BasicTensor<T> bias;  // [inter]

  static BasicAttentionGate create(std::size_t x_channels, std::size_t g_channels, std::size_t inter_channels,
                                   std::uint64_t seed);
};

template <class T>
struct GateOutput {
  BasicTensor<T> gated;  // [N, Cx, H, W]
  BasicTensor<T> alpha;  // [N, 1, H, W], values in [0, 1]
};

template <class T>
GateOutput<T> attention_gate(const BasicAttentionGate<T>& gate, const BasicTensor<T>& x, const BasicTensor<T>& g);

struct EmbeddingConfig {
  std::size_t input_size = 64;                  // square, single channel
  std::vector<std::size_t> channels{8, 16, 32};  // one conv block (3x3, relu, 2x2 pool) per entry
  std::size_t kernel_size = 3;
  std::size_t hidden = 128;
  std::size_t latent_dim = 64;
  std::uint64_t seed = 1;

  /// Throws DomainError when the resolution cannot be pooled by every block.
  void validate() const;
};

/// The embedding network shared by both twins.
///
/// Conv blocks run in order. The attention gate sits between the last two
/// blocks: it gates the output of the second-to-last block, using the last
/// block's output (upsampled to the same grid) as the gating signal. The head
/// pools the gated map back down, concatenates it with the last block's
/// output, flattens, and applies dense(hidden) -> relu -> dense(latent_dim).
///
/// Copying the object copies tensor handles, so copies share parameters.
/// Use clone() for an independent network.
template <class T>
class BasicEmbeddingNetwork {
 public:
  struct Output {
    BasicTensor<T> embedding;  // [N, latent_dim]
    BasicTensor<T> alpha;      // [N, 1, h, w] attention map of the gate
  };

  explicit BasicEmbeddingNetwork(EmbeddingConfig config = {});

  const EmbeddingConfig& config() const noexcept { return config_; }

  Output forward_with_attention(const BasicTensor<T>& images) const;
  BasicTensor<T> forward(const BasicTensor<T>& images) const { return forward_with_attention(images).embedding; }

  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const;
  std::vector<BasicTensor<T>> parameters() const;
  std::size_t parameter_count() const;
  BasicEmbeddingNetwork clone() const;

  std::vector<BasicConvBlock<T>>& blocks() noexcept { return blocks_; }
  BasicAttentionGate<T>& gate() noexcept { return gate_; }
  BasicDenseLayer<T>& hidden_layer() noexcept { return hidden_; }
  BasicDenseLayer<T>& output_layer() noexcept { return output_; }

 private:
  EmbeddingConfig config_;
  std::vector<BasicConvBlock<T>> blocks_;
  BasicAttentionGate<T> gate_;
  BasicDenseLayer<T> hidden_;
  BasicDenseLayer<T> output_;
};

/// images[N,1,S,S] in [0,1] -> [N, latent_dim].
template <class T>
BasicTensor<T> embed_forward(const BasicEmbeddingNetwork<T>& net, const BasicTensor<T>& images) {
  return net.forward(images);
}

using DenseLayer = BasicDenseLayer<float>;
using ConvBlock = BasicConvBlock<float>;
using AttentionGate = BasicAttentionGate<float>;
using EmbeddingNetwork = BasicEmbeddingNetwork<float>;

}  // namespace osxr
