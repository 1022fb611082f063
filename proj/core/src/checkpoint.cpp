#include "osxr/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>

#include "osxr/error.hpp"

namespace osxr {

nlohmann::json to_json(const EmbeddingConfig& c) {
  return {{"input_size", c.input_size}, {"channels", c.channels}, {"kernel_size", c.kernel_size},
          {"hidden", c.hidden},         {"latent_dim", c.latent_dim}, {"seed", c.seed}};
}

EmbeddingConfig embedding_config_from_json(const nlohmann::json& j) {
  EmbeddingConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.channels = j.value("channels", c.channels);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.hidden = j.value("hidden", c.hidden);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json to_json(const DaganConfig& c) {
  return {{"input_size", c.input_size},   {"channels", c.channels},       {"latent_dim", c.latent_dim},
          {"noise_scale", c.noise_scale}, {"leaky_slope", c.leaky_slope}, {"seed", c.seed}};
}

DaganConfig dagan_config_from_json(const nlohmann::json& j) {
  DaganConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.channels = j.value("channels", c.channels);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void raw(std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> out;

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get_le(4, what)); }
  std::uint64_t u64(const char* what) { return get_le(8, what); }
  float f32(const char* what) { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(4, what))); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / 4) fail(std::string("truncated ") + what);
    std::vector<float> v(n);
    for (auto& x : v) x = f32(what);
    return v;
  }
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + what);
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError("checkpoint: " + msg + " at byte offset " + std::to_string(pos_));
  }

 private:
  std::uint64_t get_le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::pair<std::string, Tensor>> all_parameters(const ModelCheckpoint& c) {
  std::vector<std::pair<std::string, Tensor>> out;
  if (c.network)
    for (auto& [n, t] : c.network->named_parameters()) out.emplace_back("embed." + n, t);
  if (c.generator)
    for (auto& [n, t] : c.generator->named_parameters()) out.emplace_back("dagan.gen." + n, t);
  if (c.discriminator)
    for (auto& [n, t] : c.discriminator->named_parameters()) out.emplace_back("dagan.disc." + n, t);
  return out;
}

struct StoredTensor {
  Shape shape;
  std::vector<float> data;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt) {
  Writer w;
  w.raw({kCheckpointMagic, kMagicSize});
  const auto params = all_parameters(ckpt);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u64(e);
    for (float v : t.data()) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.standard.by_category.size()));
  for (const auto& [category, members] : ckpt.standard.by_category) {
    w.str(category);
    w.u32(static_cast<std::uint32_t>(members.size()));
    for (const auto& m : members) {
      w.str(m.id);
      w.u32(static_cast<std::uint32_t>(m.latent.size()));
      for (float v : m.latent) w.f32(v);
    }
  }
  w.u64(ckpt.version);
  nlohmann::json meta = {{"embedding", ckpt.network ? to_json(ckpt.network->config()) : nlohmann::json(nullptr)},
                         {"dagan", ckpt.generator ? to_json(ckpt.generator->config()) : nlohmann::json(nullptr)},
                         {"has_discriminator", ckpt.discriminator.has_value()},
                         {"dagan_trained", ckpt.generator && ckpt.generator->trained()},
                         {"info", ckpt.info}};
  w.str(meta.dump());
  return std::move(w.out);
}

ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(kMagicSize, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0) r.fail("bad magic, not an OSXR1 checkpoint");
  r.skip(kMagicSize);

  std::map<std::string, StoredTensor> stored;
  const std::uint32_t n_tensors = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + name + "'");
    StoredTensor st;
    std::size_t numel = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      const std::uint64_t e = r.u64("tensor extent");
      if (e == 0 || e > (std::uint64_t{1} << 32)) r.fail("bad extent for '" + name + "'");
      st.shape.push_back(static_cast<std::size_t>(e));
      numel *= static_cast<std::size_t>(e);
      if (numel > bytes.size()) r.fail("tensor '" + name + "' larger than the file");
    }
    st.data = r.floats(numel, "tensor data");
    if (!stored.emplace(name, std::move(st)).second) r.fail("duplicate tensor '" + name + "'");
  }

  ModelCheckpoint c;
  const std::uint32_t n_categories = r.u32("category count");
  for (std::uint32_t i = 0; i < n_categories; ++i) {
    auto category = r.str("category name");
    auto& members = c.standard.by_category[category];
    const std::uint32_t n_members = r.u32("member count");
    for (std::uint32_t m = 0; m < n_members; ++m) {
      StandardMember sm;
      sm.id = r.str("member id");
      sm.latent = r.floats(r.u32("latent length"), "latent");
      members.push_back(std::move(sm));
    }
  }
  c.version = r.u64("version");
  const auto meta_text = r.str("metadata");
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
    if (!meta.at("embedding").is_null()) c.network.emplace(embedding_config_from_json(meta.at("embedding")));
    if (!meta.at("dagan").is_null()) {
      const auto dc = dagan_config_from_json(meta.at("dagan"));
      c.generator.emplace(dc);
      if (meta.value("has_discriminator", false)) c.discriminator.emplace(dc);
      c.generator->mark_trained(meta.value("dagan_trained", false));
    }
    c.info = meta.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
  } catch (const DomainError& e) {
    throw CheckpointError(std::string("checkpoint: bad model config: ") + e.what());
  }

  auto params = all_parameters(c);
  if (params.size() != stored.size()) {
    throw CheckpointError("checkpoint: file holds " + std::to_string(stored.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != t.shape()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                            ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(it->second.data.begin(), it->second.data.end(), dst.begin());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace osxr
