#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "osxr/dataset.hpp"
#include "osxr/error.hpp"

using namespace osxr;
using osxr::testing::synthetic_samples;
using osxr::testing::tiny_embedding;

namespace {

DatasetManifest manifest_of(const std::map<std::string, std::size_t>& counts) {
  DatasetManifest m;
  for (const auto& [cat, n] : counts)
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = cat + "_" + std::to_string(i);
      m.records.push_back({id, "images/" + id + ".pgm", cat, Source::real, Split::unassigned});
    }
  return m;
}

std::map<Split, std::size_t> split_counts(const DatasetManifest& m, const std::string& category) {
  std::map<Split, std::size_t> out;
  for (const auto& r : m.records)
    if (r.category == category) ++out[r.split];
  return out;
}

}  // namespace

TEST_CASE("manifest parses, serializes and round-trips") {
  const std::string text =
      "a\timages/a.pgm\tcat\treal\ttrain\n"
      "b\t/abs/b.pgm\tdog\tgenerated\ttrain\r\n"
      "\n"
      "c\tc.pgm\tcat\tuser\ttest\n";
  auto m = DatasetManifest::parse(text);
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[1].path == "/abs/b.pgm");
  CHECK(m.records[1].source == Source::generated);
  CHECK(m.records[2].split == Split::test);
  CHECK(m.category_counts() == std::map<std::string, std::size_t>{{"cat", 2}, {"dog", 1}});
  CHECK(m.categories() == std::vector<std::string>{"cat", "dog"});
  CHECK(m.find("c")->source == Source::user);
  CHECK(m.find("zzz") == nullptr);

  auto again = DatasetManifest::parse(m.serialize());
  CHECK(again.serialize() == m.serialize());
}

TEST_CASE("manifest rejects malformed and inconsistent records") {
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\tcat\treal\n"), DomainError);
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\tcat\tscanned\ttrain\n"), DomainError);
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\tcat\treal\tholdout\n"), DomainError);
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\tcat\treal\ttrain\na\tq\tcat\treal\ttrain\n"), DomainError);
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\t\treal\ttrain\n"), DomainError);
  CHECK_THROWS_AS(DatasetManifest::parse("a\tp\tcat\tgenerated\ttest\n"), DomainError);
}

TEST_CASE("manifest save and load through disk") {
  osxr::testing::TempDir dir;
  auto m = manifest_of({{"x", 3}, {"y", 2}});
  m.save(dir / "manifest.tsv");
  CHECK_FALSE(std::filesystem::exists(dir / "manifest.tsv.tmp"));
  CHECK(DatasetManifest::load(dir / "manifest.tsv").serialize() == m.serialize());
  CHECK_THROWS_AS(DatasetManifest::load(dir / "nope.tsv"), IoError);
}

TEST_CASE("load_samples resolves relative paths and honours the filter") {
  osxr::testing::TempDir dir;
  std::filesystem::create_directories(dir / "images");
  auto m = manifest_of({{"x", 2}});
  for (std::size_t i = 0; i < 2; ++i)
    write_pgm(dir.path() / m.records[i].path, osxr::testing::random_image(4, 4, i));
  auto all = load_samples(m, dir.path());
  REQUIRE(all.size() == 2);
  CHECK(all[1].pixels == osxr::testing::random_image(4, 4, 1));
  auto one = load_samples(m, dir.path(), [](const ManifestRecord& r) { return r.id == "x_0"; });
  CHECK(one.size() == 1);
}

TEST_CASE("split of 100 gives 20 test, 16 val, 64 train") {
  auto m = stratified_split(manifest_of({{"a", 100}}), 0.2, 0.2, 3);
  auto c = split_counts(m, "a");
  CHECK(c[Split::test] == 20);
  CHECK(c[Split::val] == 16);
  CHECK(c[Split::train] == 64);
}

TEST_CASE("split is deterministic per seed") {
  auto base = manifest_of({{"a", 30}, {"b", 17}});
  CHECK(stratified_split(base, 0.2, 0.1, 5).serialize() == stratified_split(base, 0.2, 0.1, 5).serialize());
  CHECK(stratified_split(base, 0.2, 0.1, 5).serialize() != stratified_split(base, 0.2, 0.1, 6).serialize());
}

TEST_CASE("split partitions every category in proportion") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::map<std::string, std::size_t> counts{{"a", 3 + seed * 7 % 50}, {"b", 5 + seed * 13 % 80}, {"c", 40}};
    auto base = manifest_of(counts);
    const double tf = 0.1 + 0.02 * static_cast<double>(seed % 5);
    const double vf = 0.05 * static_cast<double>(seed % 4);
    auto m = stratified_split(base, tf, vf, seed);
    REQUIRE(m.records.size() == base.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) CHECK(m.records[i].id == base.records[i].id);
    for (const auto& [cat, n] : counts) {
      auto c = split_counts(m, cat);
      CHECK(c[Split::test] + c[Split::val] + c[Split::train] == n);
      CHECK(c[Split::unassigned] == 0);
      const double n_test = tf * static_cast<double>(n);
      CHECK(std::abs(static_cast<double>(c[Split::test]) - n_test) <= 1.0);
      const double n_val = vf * static_cast<double>(n - c[Split::test]);
      CHECK(std::abs(static_cast<double>(c[Split::val]) - n_val) <= 1.0);
      CHECK(c[Split::train] >= 1);
    }
  }
}

TEST_CASE("generated and user samples always train") {
  auto m = manifest_of({{"a", 10}});
  m.records.push_back({"g", "g.pgm", "a", Source::generated, Split::train});
  m.records.push_back({"u", "u.pgm", "a", Source::user, Split::test});
  auto s = stratified_split(m, 0.5, 0.5, 1);
  CHECK(s.find("g")->split == Split::train);
  CHECK(s.find("u")->split == Split::train);
  CHECK_THROWS_AS(stratified_split(manifest_of({{"a", 2}}), 0.2, 0.2, 1), DomainError);
  CHECK_THROWS_AS(stratified_split(m, 1.0, 0.0, 1), DomainError);
}

TEST_CASE("like_fraction of 1 and 0 yield only one kind of pair") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 4, 8, 0.0, 1);
  PairConfig cfg{20, 1.0, 3, 8};
  for (const auto& p : make_pairs(samples, cfg)) {
    CHECK(p.y == kLikePair);
    CHECK(p.category1 == p.category2);
    CHECK(p.id1 != p.id2);
  }
  cfg.like_fraction = 0.0;
  for (const auto& p : make_pairs(samples, cfg)) {
    CHECK(p.y == kUnlikePair);
    CHECK(p.category1 != p.category2);
  }
}

TEST_CASE("two categories of two samples") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 2, 8, 0.0, 1);
  auto pairs = make_pairs(samples, PairConfig{4, 0.5, 0, 8});
  REQUIRE(pairs.size() == 4);
  CHECK(std::count_if(pairs.begin(), pairs.end(), [](const PairSample& p) { return p.y == kLikePair; }) == 2);

  auto every = all_pairs(samples, 8);
  CHECK(every.size() == 6);
  CHECK(std::count_if(every.begin(), every.end(), [](const PairSample& p) { return p.y == kLikePair; }) == 2);
  CHECK(every[0].x1.shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("pair labels follow the category rule") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto samples = synthetic_samples({"hbar", "vbar", "blob"}, 2 + seed % 3, 8, 0.1, seed);
    auto pairs = make_pairs(samples, PairConfig{30, 0.3 + 0.05 * static_cast<double>(seed), seed, 8});
    CHECK(pairs.size() == 30);
    for (const auto& p : pairs) {
      CHECK(p.id1 != p.id2);
      CHECK(p.y == (p.category1 == p.category2 ? kLikePair : kUnlikePair));
    }
  }
}

TEST_CASE("make_pairs rejects impossible requests") {
  auto single = synthetic_samples({"hbar"}, 3, 8, 0.0, 1);
  CHECK_THROWS_AS(make_pairs(single, PairConfig{4, 0.5, 0, 8}), DomainError);
  auto singletons = synthetic_samples({"hbar", "vbar"}, 1, 8, 0.0, 1);
  CHECK_THROWS_AS(make_pairs(singletons, PairConfig{4, 1.0, 0, 8}), DomainError);
  CHECK_THROWS_AS(make_pairs(singletons, PairConfig{4, 1.5, 0, 8}), DomainError);
}

TEST_CASE("explicit standard set keeps the given order") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 3, 16, 0.1, 2);
  EmbeddingNetwork net(tiny_embedding());
  auto set = select_standard_set(samples, 0, std::vector<std::string>{"vbar_2", "hbar_1", "vbar_0"}, net);
  CHECK(set.size() == 3);
  CHECK(set.by_category["vbar"][0].id == "vbar_2");
  CHECK(set.by_category["vbar"][1].id == "vbar_0");
  CHECK(set.by_category["hbar"][0].id == "hbar_1");
  for (const auto& s : samples) {
    const bool member = s.id == "vbar_2" || s.id == "hbar_1" || s.id == "vbar_0";
    CHECK((s.split == Split::standard) == member);
  }
  auto direct = embed_samples(std::vector<ImageSample>{samples[5]}, net);
  CHECK(set.by_category["vbar"][0].latent == direct[0]);
}

TEST_CASE("automatic standard set with one member per category") {
  auto samples = synthetic_samples({"hbar", "vbar", "blob"}, 4, 16, 0.1, 4);
  EmbeddingNetwork net(tiny_embedding());
  auto set = select_standard_set(samples, 1, std::nullopt, net);
  CHECK(set.categories() == std::vector<std::string>{"blob", "hbar", "vbar"});
  CHECK(set.size() == 3);
  for (const auto& [cat, members] : set.by_category) {
    REQUIRE(members.size() == 1);
    CHECK(members[0].latent.size() == 8);
  }
}

TEST_CASE("automatic selection matches a brute-force mean-energy ranking") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 6, 16, 0.2, 8);
  EmbeddingNetwork net(tiny_embedding(16, 5));
  auto copy = samples;
  auto set = select_standard_set(copy, 2, std::nullopt, net);

  for (const std::string cat : {"hbar", "vbar"}) {
    std::vector<ImageSample> pool;
    for (const auto& s : samples)
      if (s.category == cat) pool.push_back(s);
    auto z = embed_samples(pool, net, 1);
    std::vector<std::pair<double, std::string>> ranked;
    for (std::size_t a = 0; a < pool.size(); ++a) {
      double total = 0.0;
      for (std::size_t b = 0; b < pool.size(); ++b)
        if (a != b) total += energy(z[a], z[b]);
      ranked.emplace_back(total / static_cast<double>(pool.size() - 1), pool[a].id);
    }
    std::sort(ranked.begin(), ranked.end());
    std::set<std::string> expected{ranked[0].second, ranked[1].second};
    std::set<std::string> got;
    for (const auto& m : set.by_category[cat]) got.insert(m.id);
    CHECK(got == expected);
  }
}

TEST_CASE("an outlier is never chosen over identical images") {
  auto base = synthetic_samples({"blob"}, 1, 16, 0.0, 1);
  std::vector<ImageSample> samples;
  for (int i = 0; i < 3; ++i) {
    auto s = base[0];
    s.id = "same_" + std::to_string(i);
    samples.push_back(s);
  }
  ImageSample outlier = base[0];
  outlier.id = "outlier";
  outlier.pixels = osxr::testing::random_image(16, 16, 99);
  samples.insert(samples.begin(), outlier);
  EmbeddingNetwork net(tiny_embedding());
  auto set = select_standard_set(samples, 3, std::nullopt, net);
  for (const auto& m : set.by_category["blob"]) CHECK(m.id != "outlier");
}

TEST_CASE("standard set selection errors") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 2, 16, 0.1, 2);
  EmbeddingNetwork net(tiny_embedding());
  CHECK_THROWS_AS(select_standard_set(samples, 3, std::nullopt, net), DomainError);
  CHECK_THROWS_AS(select_standard_set(samples, 0, std::nullopt, net), DomainError);
  CHECK_THROWS_AS(select_standard_set(samples, 0, std::vector<std::string>{"nope"}, net), DomainError);
  CHECK_THROWS_AS(select_standard_set(samples, 0, std::vector<std::string>{"hbar_0", "hbar_0"}, net), DomainError);
  CHECK_THROWS_AS(select_standard_set(samples, 0, std::vector<std::string>{}, net), DomainError);
  samples[0].source = Source::generated;
  CHECK_THROWS_AS(select_standard_set(samples, 0, std::vector<std::string>{"hbar_0"}, net), DomainError);
}

TEST_CASE("refresh_latents follows the network") {
  auto samples = synthetic_samples({"hbar", "vbar"}, 3, 16, 0.1, 2);
  EmbeddingNetwork a(tiny_embedding(16, 1));
  EmbeddingNetwork b(tiny_embedding(16, 2));
  auto set = select_standard_set(samples, 1, std::nullopt, a);
  auto before = set.by_category["hbar"][0].latent;
  refresh_latents(set, samples, b);
  CHECK(set.by_category["hbar"][0].latent != before);
  std::vector<ImageSample> none;
  CHECK_THROWS_AS(refresh_latents(set, none, b), DomainError);
}
