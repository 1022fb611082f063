#include "osxr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "osxr/error.hpp"

namespace osxr {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::real: return "real";
    case Source::generated: return "generated";
    case Source::user: return "user";
  }
  return "real";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::standard: return "standard";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Source parse_source(std::string_view text) {
  if (text == "real") return Source::real;
  if (text == "generated") return Source::generated;
  if (text == "user") return Source::user;
  throw DomainError("unknown sample source '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text == "standard") return Split::standard;
  if (text == "unassigned") return Split::unassigned;
  throw DomainError("unknown split '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::parse(std::string_view text) {
  DatasetManifest m;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5) {
      throw DomainError("manifest line " + std::to_string(line_no) + ": expected 5 tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      m.records.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2]),
                           parse_source(fields[3]), parse_split(fields[4])});
    } catch (const DomainError& e) {
      throw DomainError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  m.validate();
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string DatasetManifest::serialize() const {
  std::string out;
  for (const auto& r : records) {
    out += r.id + '\t' + r.path + '\t' + r.category + '\t' + std::string(to_string(r.source)) + '\t' +
           std::string(to_string(r.split)) + '\n';
  }
  return out;
}

void DatasetManifest::save(const std::filesystem::path& file) const {
  validate();
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + tmp.string());
    out << serialize();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw IoError("cannot replace manifest " + file.string() + ": " + ec.message());
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (r.id.empty()) throw DomainError("manifest record with empty id");
    if (!ids.insert(r.id).second) throw DomainError("duplicate manifest id '" + r.id + "'");
    if (r.category.empty()) throw DomainError("manifest record '" + r.id + "' has no category");
    if (r.source == Source::generated && r.split != Split::train) {
      throw DomainError("generated record '" + r.id + "' must stay in the train split");
    }
  }
}

std::map<std::string, std::size_t> DatasetManifest::category_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.category];
  return counts;
}

std::vector<std::string> DatasetManifest::categories() const {
  std::vector<std::string> out;
  for (const auto& [c, n] : category_counts()) out.push_back(c);
  return out;
}

const ManifestRecord* DatasetManifest::find(std::string_view id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

std::vector<ImageSample> load_samples(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                      const std::function<bool(const ManifestRecord&)>& keep) {
  std::vector<ImageSample> out;
  for (const auto& r : manifest.records) {
    if (keep && !keep(r)) continue;
    std::filesystem::path p(r.path);
    if (p.is_relative()) p = base_dir / p;
    out.push_back({r.id, read_pgm(p), r.category, r.source, r.split});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

DatasetManifest stratified_split(DatasetManifest manifest, double test_frac, double val_frac, std::uint64_t seed) {
  if (!(test_frac >= 0.0 && test_frac < 1.0) || !(val_frac >= 0.0 && val_frac < 1.0)) {
    throw DomainError("split fractions must lie in [0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> real_by_category;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    auto& r = manifest.records[i];
    if (r.source == Source::real) {
      real_by_category[r.category].push_back(i);
    } else {
      r.split = Split::train;
    }
  }
  std::mt19937_64 rng(seed);
  for (auto& [category, idx] : real_by_category) {
    if (idx.size() < 3) {
      throw DomainError("category '" + category + "' has " + std::to_string(idx.size()) +
                        " real samples; stratified split needs at least 3");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_test = static_cast<std::size_t>(std::lround(test_frac * n));
    const auto n_val = static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(idx.size() - n_test)));
    if (n_test + n_val >= idx.size()) {
      throw DomainError("category '" + category + "' would have no training samples after splitting");
    }
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto& split = manifest.records[idx[j]].split;
      split = j < n_test ? Split::test : (j < n_test + n_val ? Split::val : Split::train);
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Pairs

namespace {

std::vector<Tensor> normalized(std::span<const ImageSample> samples, std::size_t size) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(normalize_resize(s.pixels, size, size));
  return out;
}

PairSample pair_of(std::span<const ImageSample> samples, const std::vector<Tensor>& tensors, std::size_t i,
                   std::size_t j) {
  const auto& a = samples[i];
  const auto& b = samples[j];
  return {tensors[i], tensors[j], a.category == b.category ? kLikePair : kUnlikePair,
          a.id, b.id, a.category, b.category};
}

}  // namespace

std::vector<PairSample> make_pairs(std::span<const ImageSample> samples, const PairConfig& cfg) {
  if (!(cfg.like_fraction >= 0.0 && cfg.like_fraction <= 1.0)) throw DomainError("like_fraction must lie in [0, 1]");
  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < samples.size(); ++i) by_category[samples[i].category].push_back(i);

  const auto n_like = static_cast<std::size_t>(std::lround(cfg.like_fraction * static_cast<double>(cfg.n_pairs)));
  const std::size_t n_unlike = cfg.n_pairs - n_like;
  std::vector<const std::vector<std::size_t>*> like_pools;
  std::vector<const std::vector<std::size_t>*> all_pools;
  for (const auto& [c, idx] : by_category) {
    all_pools.push_back(&idx);
    if (idx.size() >= 2) like_pools.push_back(&idx);
  }
  if (n_like > 0 && like_pools.empty()) {
    throw DomainError("make_pairs: like pairs requested but no category has two samples");
  }
  if (n_unlike > 0 && all_pools.size() < 2) {
    throw DomainError("make_pairs: unlike pairs requested but fewer than two categories are present");
  }

  const auto tensors = normalized(samples, cfg.input_size);
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  std::vector<PairSample> pairs;
  pairs.reserve(cfg.n_pairs);
  for (std::size_t p = 0; p < n_like; ++p) {
    const auto& pool = *like_pools[pick(like_pools.size())];
    const std::size_t a = pick(pool.size());
    std::size_t b = pick(pool.size() - 1);
    if (b >= a) ++b;
    pairs.push_back(pair_of(samples, tensors, pool[a], pool[b]));
  }
  for (std::size_t p = 0; p < n_unlike; ++p) {
    const std::size_t ca = pick(all_pools.size());
    std::size_t cb = pick(all_pools.size() - 1);
    if (cb >= ca) ++cb;
    const auto& pa = *all_pools[ca];
    const auto& pb = *all_pools[cb];
    pairs.push_back(pair_of(samples, tensors, pa[pick(pa.size())], pb[pick(pb.size())]));
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

std::vector<PairSample> all_pairs(std::span<const ImageSample> samples, std::size_t input_size) {
  const auto tensors = normalized(samples, input_size);
  std::vector<PairSample> pairs;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) pairs.push_back(pair_of(samples, tensors, i, j));
  return pairs;
}

// ---------------------------------------------------------------------------
// Standard set

std::size_t StandardSet::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [c, m] : by_category) n += m.size();
  return n;
}

std::vector<std::string> StandardSet::categories() const {
  std::vector<std::string> out;
  for (const auto& [c, m] : by_category) out.push_back(c);
  return out;
}

std::vector<std::string> StandardSet::member_ids() const {
  std::vector<std::string> out;
  for (const auto& [c, members] : by_category)
    for (const auto& m : members) out.push_back(m.id);
  return out;
}

std::vector<std::vector<float>> embed_samples(std::span<const ImageSample> samples, const EmbeddingNetwork& net,
                                              std::size_t batch_size) {
  NoGradGuard no_grad;
  const std::size_t size = net.config().input_size;
  std::vector<std::vector<float>> out;
  out.reserve(samples.size());
  std::vector<Tensor> batch;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(normalize_resize(samples[i].pixels, size, size));
    auto z = net.forward(stack_batch(batch));
    const std::size_t dim = z.extent(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto row = z.data().subspan(i * dim, dim);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

StandardSet select_standard_set(std::vector<ImageSample>& samples, std::size_t k_per_category,
                                const std::optional<std::vector<std::string>>& explicit_ids,
                                const EmbeddingNetwork& net) {
  std::vector<std::size_t> chosen;  // indices into samples, grouped by category in selection order
  if (explicit_ids) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
    std::unordered_set<std::string> seen;
    for (const auto& id : *explicit_ids) {
      auto it = index.find(id);
      if (it == index.end()) throw DomainError("standard set: unknown sample id '" + id + "'");
      if (samples[it->second].source != Source::real) {
        throw DomainError("standard set: sample '" + id + "' is not a real image");
      }
      if (!seen.insert(id).second) throw DomainError("standard set: duplicate id '" + id + "'");
      chosen.push_back(it->second);
    }
    if (chosen.empty()) throw DomainError("standard set: no ids given");
  } else {
    if (k_per_category == 0) throw DomainError("standard set: k must be at least 1");
    std::map<std::string, std::vector<std::size_t>> candidates;
    std::set<std::string> all_categories;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      all_categories.insert(samples[i].category);
      if (samples[i].source == Source::real && samples[i].split == Split::train) {
        candidates[samples[i].category].push_back(i);
      }
    }
    for (const auto& c : all_categories) {
      const std::size_t have = candidates.count(c) ? candidates[c].size() : 0;
      if (have < k_per_category) {
        throw DomainError("standard set: category '" + c + "' has " + std::to_string(have) +
                          " real train candidates, need " + std::to_string(k_per_category));
      }
    }
    for (const auto& [category, idx] : candidates) {
      std::vector<ImageSample> pool;
      for (auto i : idx) pool.push_back(samples[i]);
      const auto latents = embed_samples(pool, net);
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        double total = 0.0;
        for (std::size_t b = 0; b < idx.size(); ++b)
          if (a != b) total += energy(latents[a], latents[b]);
        const double mean_energy = idx.size() > 1 ? total / static_cast<double>(idx.size() - 1) : 0.0;
        ranked.emplace_back(mean_energy, a);
      }
      std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& l, const auto& r) {
        if (l.first != r.first) return l.first < r.first;
        return samples[idx[l.second]].id < samples[idx[r.second]].id;
      });
      for (std::size_t j = 0; j < k_per_category; ++j) chosen.push_back(idx[ranked[j].second]);
    }
  }

  StandardSet set;
  std::vector<ImageSample> members;
  for (auto i : chosen) {
    samples[i].split = Split::standard;
    set.by_category[samples[i].category].push_back({samples[i].id, {}});
    members.push_back(samples[i]);
  }
  refresh_latents(set, members, net);
  return set;
}

void refresh_latents(StandardSet& set, std::span<const ImageSample> samples, const EmbeddingNetwork& net) {
  std::unordered_map<std::string, const ImageSample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.id, &s);
  std::vector<ImageSample> ordered;
  std::vector<StandardMember*> slots;
  for (auto& [category, members] : set.by_category) {
    for (auto& m : members) {
      auto it = by_id.find(m.id);
      if (it == by_id.end()) throw DomainError("standard member '" + m.id + "' has no image to embed");
      ordered.push_back(*it->second);
      slots.push_back(&m);
    }
  }
  const auto latents = embed_samples(ordered, net);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i]->latent = latents[i];
}

}  // namespace osxr
