#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "osxr/error.hpp"
#include "osxr/pipeline.hpp"
#include "osxr/synthetic.hpp"

using namespace osxr;

namespace {

RunConfig tiny_run(const std::filesystem::path& dir) {
  RunConfig c;
  c.data_dir = dir;
  c.seed = 5;
  c.test_frac = 0.25;
  c.embedding = osxr::testing::tiny_embedding(16, 1);
  c.dagan = osxr::testing::tiny_dagan(16, 7);
  c.dagan_steps = 6;
  c.dagan_batch = 4;
  c.k_augment = 1;
  c.epochs = 3;
  c.n_pairs = 40;
  c.batch_size = 8;
  c.std_k = 2;
  return c;
}

void make_data(const std::filesystem::path& dir) {
  SyntheticConfig sc;
  sc.n_per_category = 8;
  sc.size = 16;
  sc.seed = 3;
  gen_synthetic(dir, sc);
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("run config JSON round-trips and overlays") {
  RunConfig c = tiny_run("somewhere");
  c.std_ids = {"a", "b"};
  c.gan.l1_weight = 0.3;
  auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  auto overlay = RunConfig::from_json(nlohmann::json{{"epochs", 99}, {"embedding", {{"latent_dim", 5}}}}, c);
  CHECK(overlay.epochs == 99);
  CHECK(overlay.embedding.latent_dim == 5);
  CHECK(overlay.embedding.hidden == c.embedding.hidden);
  CHECK(overlay.n_pairs == c.n_pairs);

  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::array()), DomainError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"epochs", "many"}}), DomainError);
  CHECK(RunConfig{}.checkpoint_path() == std::filesystem::path("data") / "model.osxr");
}

TEST_CASE("config files load over a base") {
  osxr::testing::TempDir dir;
  std::ofstream(dir / "run.json") << R"({"seed": 9, "margin": 1.5})";
  auto c = RunConfig::load(dir / "run.json", tiny_run(dir.path()));
  CHECK(c.seed == 9);
  CHECK(c.margin == 1.5);
  CHECK(c.epochs == 3);
  std::ofstream(dir / "bad.json") << "{nope";
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json", {}), DomainError);
  CHECK_THROWS_AS(RunConfig::load(dir / "missing.json", {}), IoError);
}

TEST_CASE("stages run end to end on a tiny corpus") {
  osxr::testing::TempDir dir;
  make_data(dir.path());
  auto cfg = tiny_run(dir.path());

  auto dagan = train_dagan_stage(cfg);
  CHECK(dagan.version == 1);
  CHECK(dagan.d_losses.size() == 6);
  auto csv = lines_of(dir / "model.osxr.dagan_loss.csv");
  REQUIRE(csv.size() == 7);
  CHECK(csv[0] == "step,loss,d_loss,g_loss");
  {
    std::istringstream row(csv[1]);
    std::string step, loss, d, g;
    std::getline(row, step, ',');
    std::getline(row, loss, ',');
    std::getline(row, d, ',');
    std::getline(row, g, ',');
    CHECK(std::stod(loss) == doctest::Approx(std::stod(d) + std::stod(g)));
  }

  auto manifest = DatasetManifest::load(cfg.manifest_path());
  std::size_t train_real = 0, test_real = 0;
  for (const auto& r : manifest.records) {
    train_real += r.split == Split::train;
    test_real += r.split == Split::test;
  }
  CHECK(test_real == 6);  // 2 of 8 per category
  CHECK(train_real == 18);

  CHECK(augment_stage(cfg) == 18);
  CHECK(augment_stage(cfg) == 18);  // replaces, never accumulates
  manifest = DatasetManifest::load(cfg.manifest_path());
  CHECK(manifest.records.size() == 24 + 18);

  auto siamese = train_siamese_stage(cfg);
  CHECK(siamese.version == 2);
  CHECK(siamese.epoch_losses.size() == 3);
  CHECK(siamese.standard.size() == 6);
  CHECK(lines_of(dir / "model.osxr.loss.csv").size() == 4);
  CHECK(std::filesystem::exists(dir / "model.osxr.run.json"));
  manifest = DatasetManifest::load(cfg.manifest_path());
  for (const auto& id : siamese.standard.member_ids()) {
    CHECK(manifest.find(id)->split == Split::standard);
    CHECK(manifest.find(id)->source == Source::real);
  }

  auto eval = evaluate_stage(cfg);
  CHECK(eval.report.n == 6);
  CHECK(eval.predictions.size() == 6);
  CHECK(std::filesystem::exists(dir / "model.osxr.eval.json"));
  auto ckpt = load_checkpoint(cfg.checkpoint_path());
  CHECK(ckpt.version == 2);
  CHECK(ckpt.info["last_eval"]["n"] == 6);
  CHECK(ckpt.generator.has_value());

  auto test_id = std::find_if(manifest.records.begin(), manifest.records.end(),
                              [](const ManifestRecord& r) { return r.split == Split::test; });
  auto d = diagnose_file(cfg, dir.path() / test_id->path);
  CHECK(d.checkpoint_version == 2);
  CHECK(d.per_category_mean_energy.size() == 3);
}

TEST_CASE("evaluation reads only the real test split") {
  osxr::testing::TempDir dir;
  make_data(dir.path());
  auto cfg = tiny_run(dir.path());
  cfg.k_augment = 1;
  train_dagan_stage(cfg);
  augment_stage(cfg);
  train_siamese_stage(cfg);
  const auto before = evaluate_stage(cfg);

  // Destroy every non-test image; evaluation must not notice.
  auto manifest = DatasetManifest::load(cfg.manifest_path());
  for (const auto& r : manifest.records)
    if (r.split != Split::test) std::ofstream(dir.path() / r.path, std::ios::trunc) << "garbage";
  const auto after = evaluate_stage(cfg);
  CHECK(after.predictions == before.predictions);
  CHECK(after.truths == before.truths);
}

TEST_CASE("the same config reproduces the same training run") {
  osxr::testing::TempDir a, b;
  make_data(a.path());
  make_data(b.path());
  auto ra = train_siamese_stage(tiny_run(a.path()));
  auto rb = train_siamese_stage(tiny_run(b.path()));
  CHECK(ra.epoch_losses == rb.epoch_losses);
  CHECK(ra.standard.member_ids() == rb.standard.member_ids());
  auto ca = load_checkpoint(tiny_run(a.path()).checkpoint_path());
  auto cb = load_checkpoint(tiny_run(b.path()).checkpoint_path());
  auto pa = ca.network->parameters(), pb = cb.network->parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin()));

  auto other = tiny_run(b.path());
  other.seed = 6;
  CHECK(train_siamese_stage(other).epoch_losses != ra.epoch_losses);
}

TEST_CASE("stages report missing prerequisites") {
  osxr::testing::TempDir dir;
  auto cfg = tiny_run(dir.path());
  CHECK_THROWS_AS(train_siamese_stage(cfg), IoError);
  make_data(dir.path());
  CHECK_THROWS_AS(augment_stage(cfg), CheckpointError);
  CHECK_THROWS_AS(evaluate_stage(cfg), CheckpointError);
  CHECK_THROWS_AS(diagnose_file(cfg, dir / "x.pgm"), CheckpointError);
  train_siamese_stage(cfg);
  CHECK_THROWS_AS(augment_stage(cfg), CheckpointError);
}

TEST_CASE("an existing split is kept") {
  osxr::testing::TempDir dir;
  make_data(dir.path());
  auto cfg = tiny_run(dir.path());
  auto first = ensure_split(cfg);
  cfg.seed = 77;
  CHECK(ensure_split(cfg).serialize() == first.serialize());
}
