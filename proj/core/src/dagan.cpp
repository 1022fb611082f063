#include "osxr/dagan.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "osxr/error.hpp"
#include "osxr/image.hpp"
#include "osxr/ops.hpp"

namespace osxr {

void DaganConfig::validate() const {
  if (channels.empty()) throw DomainError("dagan: at least one conv level is required");
  if (input_size == 0 || input_size % (std::size_t{1} << channels.size()) != 0) {
    throw DomainError("dagan: input size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(channels.size()));
  }
  if (latent_dim == 0) throw DomainError("dagan: latent_dim must be positive");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw DomainError("dagan: noise_scale must be >= 0");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw DomainError("dagan: leaky_slope must lie in (0,1)");
}

namespace {

std::size_t bottleneck_side(const DaganConfig& cfg) { return cfg.input_size >> cfg.channels.size(); }

void check_images(const Tensor& t, std::size_t channels, std::size_t size, const char* what) {
  if (t.rank() != 4 || t.extent(1) != channels || t.extent(2) != size || t.extent(3) != size) {
    throw ShapeError(std::string(what) + ": expected [N," + std::to_string(channels) + "," + std::to_string(size) +
                     "," + std::to_string(size) + "], got " + shape_str(t.shape()));
  }
}

std::string conv_name(const std::string& prefix, std::size_t i) { return prefix + std::to_string(i); }

}  // namespace

DaganGenerator::DaganGenerator(DaganConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto act = Activation::leaky_relu(config_.leaky_slope);
  std::uint64_t idx = 0;
  std::size_t in = 1;
  for (auto c : config_.channels) {
    encoder_.push_back(ConvBlock::create(in, c, 3, act, 2, std::nullopt, derive_seed(config_.seed, idx++)));
    in = c;
  }
  const std::size_t side = bottleneck_side(config_);
  const std::size_t flat = in * side * side;
  to_latent_ = DenseLayer::create(flat, config_.latent_dim, derive_seed(config_.seed, idx++));
  from_latent_ = DenseLayer::create(config_.latent_dim, flat, derive_seed(config_.seed, idx++));
  for (std::size_t level = 0; level < config_.channels.size(); ++level) {
    const std::size_t j = config_.channels.size() - 1 - level;
    const std::size_t out = j == 0 ? config_.channels.front() : config_.channels[j - 1];
    decoder_.push_back(
        ConvBlock::create(in, out, 3, Activation::relu(), 1, std::nullopt, derive_seed(config_.seed, idx++)));
    in = out;
  }
  to_image_ = ConvBlock::create(in, 1, 3, Activation::sigmoid(), 1, std::nullopt, derive_seed(config_.seed, idx++));
}

Tensor DaganGenerator::encode(const Tensor& images) const {
  check_images(images, 1, config_.input_size, "dagan encode");
  auto h = images;
  for (const auto& b : encoder_) h = conv_block_forward(b, h);
  return dense_forward(to_latent_, flatten(h));
}

Tensor DaganGenerator::decode(const Tensor& latent) const {
  if (latent.rank() != 2 || latent.extent(1) != config_.latent_dim) {
    throw ShapeError("dagan decode: expected [N," + std::to_string(config_.latent_dim) + "], got " +
                     shape_str(latent.shape()));
  }
  const std::size_t side = bottleneck_side(config_);
  auto h = relu(dense_forward(from_latent_, latent));
  h = reshape(h, {latent.extent(0), config_.channels.back(), side, side});
  for (const auto& b : decoder_) h = conv_block_forward(b, upsample_nearest2d(h, 2));
  return conv_block_forward(to_image_, h);
}

Tensor DaganGenerator::forward(const Tensor& images, const Tensor& noise) const {
  auto z = encode(images);
  if (noise.shape() != z.shape()) {
    throw ShapeError("dagan: noise " + shape_str(noise.shape()) + " does not match latent " + shape_str(z.shape()));
  }
  if (config_.noise_scale != 0.0) z = add(z, scale(noise, config_.noise_scale));
  return decode(z);
}

std::vector<std::pair<std::string, Tensor>> DaganGenerator::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    out.emplace_back(conv_name("enc", i) + ".kernel", encoder_[i].kernel);
    out.emplace_back(conv_name("enc", i) + ".bias", encoder_[i].bias);
  }
  out.emplace_back("to_latent.weight", to_latent_.weight);
  out.emplace_back("to_latent.bias", to_latent_.bias);
  out.emplace_back("from_latent.weight", from_latent_.weight);
  out.emplace_back("from_latent.bias", from_latent_.bias);
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    out.emplace_back(conv_name("dec", i) + ".kernel", decoder_[i].kernel);
    out.emplace_back(conv_name("dec", i) + ".bias", decoder_[i].bias);
  }
  out.emplace_back("to_image.kernel", to_image_.kernel);
  out.emplace_back("to_image.bias", to_image_.bias);
  return out;
}

std::vector<Tensor> DaganGenerator::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

DaganDiscriminator::DaganDiscriminator(DaganConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto act = Activation::leaky_relu(config_.leaky_slope);
  const std::uint64_t seed = derive_seed(config_.seed, 1000);
  std::uint64_t idx = 0;
  std::size_t in = 2;
  for (auto c : config_.channels) {
    convs_.push_back(ConvBlock::create(in, c, 3, act, 2, std::nullopt, derive_seed(seed, idx++)));
    in = c;
  }
  const std::size_t side = bottleneck_side(config_);
  head_ = DenseLayer::create(in * side * side, 1, derive_seed(seed, idx++));
}

Tensor DaganDiscriminator::logits(const Tensor& reference, const Tensor& candidate) const {
  check_images(reference, 1, config_.input_size, "discriminator reference");
  check_images(candidate, 1, config_.input_size, "discriminator candidate");
  if (reference.extent(0) != candidate.extent(0)) throw ShapeError("discriminator: batch sizes differ");
  auto h = concat_channels(reference, candidate);
  for (const auto& b : convs_) h = conv_block_forward(b, h);
  return dense_forward(head_, flatten(h));
}

std::vector<std::pair<std::string, Tensor>> DaganDiscriminator::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back(conv_name("conv", i) + ".kernel", convs_[i].kernel);
    out.emplace_back(conv_name("conv", i) + ".bias", convs_[i].bias);
  }
  out.emplace_back("head.weight", head_.weight);
  out.emplace_back("head.bias", head_.bias);
  return out;
}

std::vector<Tensor> DaganDiscriminator::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor sample_noise(std::size_t n, std::size_t latent_dim, std::uint64_t seed) {
  return Tensor::of({n, latent_dim}, Gaussian{0.0, 1.0, seed});
}

Tensor generate(const DaganGenerator& gen, const Tensor& images, const Tensor& noise) {
  NoGradGuard no_grad;
  return clamp_values(gen.forward(images, noise), 0.0f, 1.0f);
}

std::vector<double> discriminate(const DaganDiscriminator& disc, const Tensor& reference, const Tensor& candidate) {
  NoGradGuard no_grad;
  const auto z = disc.logits(reference, candidate);
  constexpr double kEdge = 1e-7;
  std::vector<double> out;
  for (float v : z.data()) out.push_back(std::clamp(1.0 / (1.0 + std::exp(-static_cast<double>(v))), kEdge, 1.0 - kEdge));
  return out;
}

GanTrainState::GanTrainState(const GanTrainConfig& cfg)
    : gen_optimizer(Optimizer::adam(cfg.gen_learning_rate, cfg.beta1)),
      disc_optimizer(Optimizer::adam(cfg.disc_learning_rate, cfg.beta1)),
      config(cfg) {}

namespace {

// Row i of the result is row (i+1) mod B of the batch.
Tensor rotate_rows(const Tensor& batch) {
  const std::size_t b = batch.extent(0);
  const std::size_t stride = batch.numel() / b;
  auto src = batch.data();
  std::vector<float> out(batch.numel());
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(((i + 1) % b) * stride), stride,
                out.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return Tensor::from(batch.shape(), std::move(out));
}

}  // namespace

GanStepLosses dagan_train_step(GanTrainState& state, DaganGenerator& gen, DaganDiscriminator& disc,
                               const Tensor& batch) {
  if (batch.rank() != 4 || batch.extent(0) < 2) {
    throw DomainError("dagan_train_step: needs a batch of at least 2 images, got " + shape_str(batch.shape()));
  }
  const std::size_t b = batch.extent(0);
  const std::size_t latent = gen.config().latent_dim;
  const auto x = batch.detach();
  const auto ref = rotate_rows(x);
  const std::vector<float> ones(b, 1.0f);
  const std::vector<float> zeros(b, 0.0f);
  const std::uint64_t t = state.steps;

  auto gen_params = gen.parameters();
  auto disc_params = disc.parameters();
  for (auto& p : gen_params) p.clear_grad();
  for (auto& p : disc_params) p.clear_grad();

  // Discriminator update, generator frozen.
  Tensor fake;
  {
    NoGradGuard no_grad;
    fake = gen.forward(x, sample_noise(b, latent, derive_seed(state.config.noise_seed, 2 * t)));
  }
  auto d_real = bce_with_logits(disc.logits(ref, x), std::span<const float>(ones));
  auto d_fake = bce_with_logits(disc.logits(ref, fake), std::span<const float>(zeros));
  auto d_loss = scale(add(d_real, d_fake), 0.5);
  backward(d_loss);
  state.disc_optimizer.step(disc_params);

  // Generator update, discriminator frozen.
  auto g_fake = gen.forward(x, sample_noise(b, latent, derive_seed(state.config.noise_seed, 2 * t + 1)));
  auto g_adv = bce_with_logits(disc.logits(ref, g_fake), std::span<const float>(ones));
  auto l1 = scale(sum(abs(sub(g_fake, x))), 1.0 / static_cast<double>(b));
  auto g_loss = add(g_adv, scale(l1, state.config.l1_weight));
  backward(g_loss);
  state.gen_optimizer.step(gen_params);
  for (auto& p : disc_params) p.clear_grad();

  const GanStepLosses losses{d_loss.item(), g_loss.item()};
  if (!std::isfinite(losses.d_loss) || !std::isfinite(losses.g_loss)) {
    throw DomainError("dagan_train_step: non-finite loss at step " + std::to_string(t));
  }
  state.d_losses.push_back(losses.d_loss);
  state.g_losses.push_back(losses.g_loss);
  ++state.steps;
  gen.mark_trained();
  return losses;
}

void train_dagan(GanTrainState& state, DaganGenerator& gen, DaganDiscriminator& disc,
                 std::span<const ImageSample> samples, const GanLoopOptions& options) {
  if (options.batch_size < 2) throw DomainError("train_dagan: batch_size must be at least 2");
  const std::size_t size = gen.config().input_size;
  std::map<std::string, std::vector<Tensor>> pools;
  for (const auto& s : samples) {
    if (s.split == Split::test || s.split == Split::val || s.split == Split::standard) continue;
    if (s.source == Source::generated) continue;
    pools[s.category].push_back(normalize_resize(s.pixels, size, size));
  }
  std::vector<const std::vector<Tensor>*> usable;
  for (const auto& [c, pool] : pools)
    if (pool.size() >= 2) usable.push_back(&pool);
  if (usable.empty()) throw DomainError("train_dagan: no category has two training images");

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order;
  std::vector<Tensor> picked;
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto& pool = *usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
    order.resize(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    picked.clear();
    for (std::size_t i = 0; i < std::min(options.batch_size, pool.size()); ++i) picked.push_back(pool[order[i]]);
    dagan_train_step(state, gen, disc, stack_batch(picked));
  }
}

std::vector<ImageSample> augment_dataset(const DaganGenerator& gen, std::span<const ImageSample> samples,
                                         std::size_t k, std::uint64_t seed) {
  if (!gen.trained()) throw StateError("augment_dataset: generator has not been trained");
  for (const auto& s : samples) {
    if (s.split == Split::test || s.split == Split::val || s.split == Split::standard) {
      throw DomainError("augment_dataset: sample '" + s.id + "' is in the " + std::string(to_string(s.split)) +
                        " split; only training data may be augmented");
    }
  }
  std::vector<ImageSample> out(samples.begin(), samples.end());
  if (k == 0) return out;
  const std::size_t size = gen.config().input_size;
  const std::size_t latent = gen.config().latent_dim;
  out.reserve(samples.size() * (k + 1));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto x = normalize_resize(s.pixels, size, size);
    for (std::size_t j = 0; j < k; ++j) {
      const auto y = generate(gen, x, sample_noise(1, latent, derive_seed(seed, i * k + j)));
      out.push_back({s.id + "~gen" + std::to_string(j), image_from_unit(y.data(), size, size), s.category,
                     Source::generated, Split::train});
    }
  }
  return out;
}

}  // namespace osxr
