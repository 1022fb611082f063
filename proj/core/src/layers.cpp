#include "osxr/layers.hpp"

#include <cmath>

#include "osxr/error.hpp"

namespace osxr {

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

template <class T>
BasicTensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double a = glorot_bound(fan_in, fan_out);
  auto t = BasicTensor<T>::of(std::move(shape), Uniform{-a, a, seed});
  t.set_requires_grad(true);
  return t;
}

template <class T>
BasicTensor<T> zero_param(Shape shape) {
  auto t = BasicTensor<T>::of(std::move(shape), Zeros{});
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <class T>
BasicDenseLayer<T> BasicDenseLayer<T>::create(std::size_t in, std::size_t out, std::uint64_t seed) {
  return {glorot<T>({in, out}, in, out, seed), zero_param<T>({out})};
}

template <class T>
BasicTensor<T> dense_forward(const BasicDenseLayer<T>& layer, const BasicTensor<T>& x) {
  if (x.rank() != 2 || x.extent(1) != layer.in_features()) {
    throw ShapeError("dense_forward: input " + shape_str(x.shape()) + " does not match layer " +
                     shape_str(layer.weight.shape()));
  }
  return bias_add(matmul(x, layer.weight), layer.bias);
}

template <class T>
BasicConvBlock<T> BasicConvBlock<T>::create(std::size_t in_channels, std::size_t out_channels,
                                            std::size_t kernel_size, Activation act, std::size_t stride,
                                            std::optional<PoolSpec> pool, std::uint64_t seed) {
  const std::size_t area = kernel_size * kernel_size;
  BasicConvBlock b;
  b.kernel = glorot<T>({out_channels, in_channels, kernel_size, kernel_size}, in_channels * area,
                       out_channels * area, seed);
  b.bias = zero_param<T>({out_channels});
  b.act = act;
  b.stride = stride;
  b.padding = kernel_size / 2;
  b.pool = pool;
  return b;
}

template <class T>
BasicTensor<T> conv_block_forward(const BasicConvBlock<T>& block, const BasicTensor<T>& x) {
  auto h = activation(conv2d(x, block.kernel, block.bias, block.stride, block.padding), block.act);
  if (block.pool) h = max_pool2d(h, block.pool->window, block.pool->stride);
  return h;
}

template <class T>
BasicAttentionGate<T> BasicAttentionGate<T>::create(std::size_t x_channels, std::size_t g_channels,
                                                    std::size_t inter_channels, std::uint64_t seed) {
  BasicAttentionGate gate;
  gate.wx = glorot<T>({inter_channels, x_channels, 1, 1}, x_channels, inter_channels, derive_seed(seed, 0));
  gate.wg = glorot<T>({inter_channels, g_channels, 1, 1}, g_channels, inter_channels, derive_seed(seed, 1));
  gate.psi = glorot<T>({1, inter_channels, 1, 1}, inter_channels, 1, derive_seed(seed, 2));
  gate.bias = zero_param<T>({inter_channels});
  return gate;
}

template <class T>
GateOutput<T> attention_gate(const BasicAttentionGate<T>& gate, const BasicTensor<T>& x, const BasicTensor<T>& g) {
  if (x.rank() != 4 || g.rank() != 4 || x.extent(0) != g.extent(0) || x.extent(2) != g.extent(2) ||
      x.extent(3) != g.extent(3)) {
    throw ShapeError("attention_gate: feature map " + shape_str(x.shape()) + " and gating signal " +
                     shape_str(g.shape()) + " must share batch and spatial extents");
  }
  auto joint = bias_add(add(conv2d(x, gate.wx), conv2d(g, gate.wg)), gate.bias);
  auto alpha = sigmoid(conv2d(relu(joint), gate.psi));
  return {mask_channels(x, alpha), alpha};
}

void EmbeddingConfig::validate() const {
  if (channels.size() < 2) throw DomainError("embedding network needs at least two conv blocks");
  if (input_size == 0 || latent_dim == 0 || hidden == 0 || kernel_size == 0) {
    throw DomainError("embedding network extents must be positive");
  }
  std::size_t s = input_size;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (s % 2 != 0 || s < 2) {
      throw DomainError("input size " + std::to_string(input_size) + " cannot be pooled by " +
                        std::to_string(channels.size()) + " blocks");
    }
    s /= 2;
  }
}

template <class T>
BasicEmbeddingNetwork<T>::BasicEmbeddingNetwork(EmbeddingConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.channels;
  std::uint64_t idx = 0;
  std::size_t in = 1;
  for (std::size_t c : ch) {
    blocks_.push_back(BasicConvBlock<T>::create(in, c, config_.kernel_size, Activation::relu(), 1, PoolSpec{},
                                                derive_seed(config_.seed, idx++)));
    in = c;
  }
  const std::size_t cx = ch[ch.size() - 2], cg = ch.back();
  gate_ = BasicAttentionGate<T>::create(cx, cg, cx, derive_seed(config_.seed, idx++));
  const std::size_t final_side = config_.input_size >> ch.size();
  const std::size_t head_in = (cx + cg) * final_side * final_side;
  hidden_ = BasicDenseLayer<T>::create(head_in, config_.hidden, derive_seed(config_.seed, idx++));
  output_ = BasicDenseLayer<T>::create(config_.hidden, config_.latent_dim, derive_seed(config_.seed, idx++));
}

template <class T>
typename BasicEmbeddingNetwork<T>::Output BasicEmbeddingNetwork<T>::forward_with_attention(
    const BasicTensor<T>& images) const {
  const std::size_t s = config_.input_size;
  if (images.rank() != 4 || images.extent(1) != 1 || images.extent(2) != s || images.extent(3) != s) {
    throw ShapeError("embed_forward: expected [N,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                     shape_str(images.shape()));
  }
  auto h = images;
  BasicTensor<T> x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = conv_block_forward(blocks_[i], h);
    if (i + 2 == blocks_.size()) x = h;
  }
  const std::size_t factor = x.extent(2) / h.extent(2);
  auto gate_out = attention_gate(gate_, x, upsample_nearest2d(h, factor));
  auto head = concat_channels(max_pool2d(gate_out.gated, factor, factor), h);
  auto z = dense_forward(output_, relu(dense_forward(hidden_, flatten(head))));
  return {z, gate_out.alpha};
}

template <class T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicEmbeddingNetwork<T>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.emplace_back("block" + std::to_string(i) + ".kernel", blocks_[i].kernel);
    out.emplace_back("block" + std::to_string(i) + ".bias", blocks_[i].bias);
  }
  out.emplace_back("gate.wx", gate_.wx);
  out.emplace_back("gate.wg", gate_.wg);
  out.emplace_back("gate.psi", gate_.psi);
  out.emplace_back("gate.bias", gate_.bias);
  out.emplace_back("dense0.weight", hidden_.weight);
  out.emplace_back("dense0.bias", hidden_.bias);
  out.emplace_back("dense1.weight", output_.weight);
  out.emplace_back("dense1.bias", output_.bias);
  return out;
}

template <class T>
std::vector<BasicTensor<T>> BasicEmbeddingNetwork<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <class T>
std::size_t BasicEmbeddingNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

template <class T>
BasicEmbeddingNetwork<T> BasicEmbeddingNetwork<T>::clone() const {
  BasicEmbeddingNetwork copy = *this;
  for (auto& b : copy.blocks_) {
    b.kernel = b.kernel.clone();
    b.bias = b.bias.clone();
  }
  copy.gate_.wx = gate_.wx.clone();
  copy.gate_.wg = gate_.wg.clone();
  copy.gate_.psi = gate_.psi.clone();
  copy.gate_.bias = gate_.bias.clone();
  copy.hidden_ = {hidden_.weight.clone(), hidden_.bias.clone()};
  copy.output_ = {output_.weight.clone(), output_.bias.clone()};
  return copy;
}

#define OSXR_INSTANTIATE_LAYERS(T)                                                                      \
  template struct BasicDenseLayer<T>;                                                                   \
  template struct BasicConvBlock<T>;                                                                    \
  template struct BasicAttentionGate<T>;                                                                \
  template class BasicEmbeddingNetwork<T>;                                                              \
  template BasicTensor<T> dense_forward(const BasicDenseLayer<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> conv_block_forward(const BasicConvBlock<T>&, const BasicTensor<T>&);          \
  template GateOutput<T> attention_gate(const BasicAttentionGate<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

OSXR_INSTANTIATE_LAYERS(float)
OSXR_INSTANTIATE_LAYERS(double)

#undef OSXR_INSTANTIATE_LAYERS

}  // namespace osxr
