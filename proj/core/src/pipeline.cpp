#include "osxr/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "osxr/error.hpp"
#include "osxr/optim.hpp"
#include "osxr/siamese.hpp"

namespace osxr {

nlohmann::json RunConfig::to_json() const {
  return {{"data_dir", data_dir.string()},
          {"checkpoint", checkpoint.string()},
          {"seed", seed},
          {"test_frac", test_frac},
          {"val_frac", val_frac},
          {"embedding", osxr::to_json(embedding)},
          {"dagan", osxr::to_json(dagan)},
          {"gan",
           {{"gen_learning_rate", gan.gen_learning_rate},
            {"disc_learning_rate", gan.disc_learning_rate},
            {"beta1", gan.beta1},
            {"l1_weight", gan.l1_weight},
            {"noise_seed", gan.noise_seed}}},
          {"dagan_steps", dagan_steps},
          {"dagan_batch", dagan_batch},
          {"k_augment", k_augment},
          {"epochs", epochs},
          {"n_pairs", n_pairs},
          {"like_fraction", like_fraction},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"margin", margin},
          {"std_k", std_k},
          {"std_ids", std_ids},
          {"z", z},
          {"listen", listen}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j, RunConfig base) {
  if (!j.is_object()) throw DomainError("run config must be a JSON object");
  auto m = base.to_json();
  m.merge_patch(j);
  RunConfig c;
  try {
    c.data_dir = m.at("data_dir").get<std::string>();
    c.checkpoint = m.at("checkpoint").get<std::string>();
    c.seed = m.at("seed").get<std::uint64_t>();
    c.test_frac = m.at("test_frac").get<double>();
    c.val_frac = m.at("val_frac").get<double>();
    c.embedding = embedding_config_from_json(m.at("embedding"));
    c.dagan = dagan_config_from_json(m.at("dagan"));
    const auto& g = m.at("gan");
    c.gan.gen_learning_rate = g.at("gen_learning_rate").get<double>();
    c.gan.disc_learning_rate = g.at("disc_learning_rate").get<double>();
    c.gan.beta1 = g.at("beta1").get<double>();
    c.gan.l1_weight = g.at("l1_weight").get<double>();
    c.gan.noise_seed = g.at("noise_seed").get<std::uint64_t>();
    c.dagan_steps = m.at("dagan_steps").get<std::size_t>();
    c.dagan_batch = m.at("dagan_batch").get<std::size_t>();
    c.k_augment = m.at("k_augment").get<std::size_t>();
    c.epochs = m.at("epochs").get<std::size_t>();
    c.n_pairs = m.at("n_pairs").get<std::size_t>();
    c.like_fraction = m.at("like_fraction").get<double>();
    c.batch_size = m.at("batch_size").get<std::size_t>();
    c.learning_rate = m.at("learning_rate").get<double>();
    c.margin = m.at("margin").get<double>();
    c.std_k = m.at("std_k").get<std::size_t>();
    c.std_ids = m.at("std_ids").get<std::vector<std::string>>();
    c.z = m.at("z").get<double>();
    c.listen = m.at("listen").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& file, RunConfig base) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  try {
    return from_json(nlohmann::json::parse(in), std::move(base));
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError("config " + file.string() + ": " + e.what());
  }
}

namespace {

ModelCheckpoint load_or_new(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) return load_checkpoint(path);
  return {};
}

ModelCheckpoint load_required(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out += suffix;
  return out;
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.manifest_path())) {
    throw IoError("manifest not found: " + cfg.manifest_path().string());
  }
  return DatasetManifest::load(cfg.manifest_path());
}

}  // namespace

std::vector<ImageSample> load_split(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                    Split split, bool real_only) {
  return load_samples(manifest, base_dir, [&](const ManifestRecord& r) {
    return r.split == split && (!real_only || r.source == Source::real);
  });
}

void write_loss_csv(const std::filesystem::path& file, const std::vector<std::vector<double>>& columns,
                    const std::vector<std::string>& names) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "step";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    out << r;
    for (const auto& col : columns) {
      std::snprintf(buf, sizeof buf, ",%.9g", col[r]);
      out << buf;
    }
    out << '\n';
  }
}

DatasetManifest ensure_split(const RunConfig& cfg) {
  auto manifest = load_manifest(cfg);
  bool unassigned = false;
  for (const auto& r : manifest.records) unassigned |= r.source == Source::real && r.split == Split::unassigned;
  if (!unassigned) return manifest;
  manifest = stratified_split(std::move(manifest), cfg.test_frac, cfg.val_frac, derive_seed(cfg.seed, 1));
  manifest.save(cfg.manifest_path());
  return manifest;
}

DaganStageResult train_dagan_stage(const RunConfig& cfg) {
  const auto manifest = ensure_split(cfg);
  const auto samples = load_split(manifest, cfg.data_dir, Split::train, true);

  DaganConfig dc = cfg.dagan;
  dc.seed = derive_seed(cfg.seed, dc.seed);
  DaganGenerator gen(dc);
  DaganDiscriminator disc(dc);
  GanTrainConfig gc = cfg.gan;
  gc.noise_seed = derive_seed(cfg.seed, gc.noise_seed);
  GanTrainState state(gc);
  train_dagan(state, gen, disc, samples, {cfg.dagan_steps, cfg.dagan_batch, derive_seed(cfg.seed, 3)});

  auto ckpt = load_or_new(cfg.checkpoint_path());
  ckpt.generator = gen;
  ckpt.discriminator = disc;
  ckpt.version += 1;
  ckpt.info["created_at"] = utc_timestamp();
  ckpt.info["dagan_run"] = cfg.to_json();
  save_checkpoint(cfg.checkpoint_path(), ckpt);

  std::vector<double> total(state.d_losses.size());
  for (std::size_t i = 0; i < total.size(); ++i) total[i] = state.d_losses[i] + state.g_losses[i];
  write_loss_csv(sibling(cfg.checkpoint_path(), ".dagan_loss.csv"), {total, state.d_losses, state.g_losses},
                 {"loss", "d_loss", "g_loss"});
  return {ckpt.version, state.d_losses, state.g_losses};
}

std::size_t augment_stage(const RunConfig& cfg) {
  const auto ckpt = load_required(cfg.checkpoint_path());
  if (!ckpt.generator) throw CheckpointError("checkpoint has no DAGAN generator; run train-dagan first");
  auto manifest = ensure_split(cfg);
  std::erase_if(manifest.records, [](const ManifestRecord& r) { return r.source == Source::generated; });
  const auto samples = load_split(manifest, cfg.data_dir, Split::train, true);
  const auto augmented = augment_dataset(*ckpt.generator, samples, cfg.k_augment, derive_seed(cfg.seed, 4));

  const auto dir = cfg.data_dir / "generated";
  std::filesystem::create_directories(dir);
  std::size_t added = 0;
  for (const auto& s : augmented) {
    if (s.source != Source::generated) continue;
    const auto rel = std::filesystem::path("generated") / (s.id + ".pgm");
    write_pgm(cfg.data_dir / rel, s.pixels);
    manifest.records.push_back({s.id, rel.generic_string(), s.category, Source::generated, Split::train});
    ++added;
  }
  manifest.save(cfg.manifest_path());
  return added;
}

SiameseStageResult train_siamese_stage(const RunConfig& cfg) {
  auto manifest = ensure_split(cfg);
  for (auto& r : manifest.records)
    if (r.split == Split::standard) r.split = Split::train;
  auto train = load_split(manifest, cfg.data_dir, Split::train, false);
  if (train.empty()) throw DomainError("train-siamese: no training samples");

  EmbeddingConfig ec = cfg.embedding;
  ec.seed = derive_seed(cfg.seed, ec.seed);
  EmbeddingNetwork net(ec);
  auto optimizer = Optimizer::adam(cfg.learning_rate);
  const LossConfig loss{cfg.margin};
  loss.validate();

  SiameseStageResult result;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const PairConfig pc{cfg.n_pairs, cfg.like_fraction, derive_seed(cfg.seed, 1000 + 2 * e), ec.input_size};
    const auto pairs = make_pairs(train, pc);
    result.epoch_losses.push_back(
        train_epoch(pairs, net, loss, optimizer, {cfg.batch_size, derive_seed(cfg.seed, 1001 + 2 * e)}));
  }

  std::optional<std::vector<std::string>> ids;
  if (!cfg.std_ids.empty()) ids = cfg.std_ids;
  result.standard = select_standard_set(train, cfg.std_k, ids, net);
  const auto members = result.standard.member_ids();
  const std::set<std::string> member_set(members.begin(), members.end());
  for (auto& r : manifest.records)
    if (member_set.count(r.id)) r.split = Split::standard;
  manifest.save(cfg.manifest_path());

  auto ckpt = load_or_new(cfg.checkpoint_path());
  ckpt.network = net;
  ckpt.standard = result.standard;
  ckpt.version += 1;
  ckpt.info["created_at"] = utc_timestamp();
  ckpt.info["run"] = cfg.to_json();
  save_checkpoint(cfg.checkpoint_path(), ckpt);
  result.version = ckpt.version;

  write_loss_csv(sibling(cfg.checkpoint_path(), ".loss.csv"), {result.epoch_losses}, {"loss"});
  write_json(sibling(cfg.checkpoint_path(), ".run.json"), cfg.to_json());
  return result;
}

EvaluationResult evaluate_stage(const RunConfig& cfg) {
  const auto ckpt = load_required(cfg.checkpoint_path());
  if (!ckpt.network || ckpt.standard.empty()) {
    throw CheckpointError("checkpoint has no trained embedding network; run train-siamese first");
  }
  const auto manifest = load_manifest(cfg);
  const auto test = load_split(manifest, cfg.data_dir, Split::test, true);
  if (test.empty()) throw DomainError("evaluate: the manifest has no real test samples");

  EvaluationResult r;
  r.predictions = predict_categories(test, ckpt.standard, *ckpt.network);
  for (const auto& s : test) r.truths.push_back(s.category);
  const auto categories = ckpt.standard.categories();
  r.report = make_eval_report(r.predictions, r.truths, categories, cfg.z);
  r.dissimilarity = dissimilarity_report(test, ckpt.standard, *ckpt.network);

  auto stored = ckpt;
  stored.info["last_eval"] = {{"source", "test_split"},
                              {"n", r.report.n},
                              {"accuracy", r.report.accuracy},
                              {"ci_half_width", r.report.ci_half_width},
                              {"z", r.report.z}};
  save_checkpoint(cfg.checkpoint_path(), stored);

  auto stats = [](const EnergyStats& s) {
    return nlohmann::json{{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}};
  };
  write_json(sibling(cfg.checkpoint_path(), ".eval.json"),
             {{"checkpoint_version", ckpt.version},
              {"report", r.report.to_json()},
              {"dissimilarity",
               {{"like", stats(r.dissimilarity.like)},
                {"unlike", stats(r.dissimilarity.unlike)},
                {"mean_ratio", r.dissimilarity.mean_ratio},
                {"separated", r.dissimilarity.separated()}}}});
  return r;
}

Diagnosis diagnose_file(const RunConfig& cfg, const std::filesystem::path& image) {
  const auto ckpt = load_required(cfg.checkpoint_path());
  if (!ckpt.network || ckpt.standard.empty()) {
    throw CheckpointError("checkpoint has no trained embedding network; run train-siamese first");
  }
  return diagnose(read_pgm(image), ckpt.standard, *ckpt.network, ckpt.version);
}

}  // namespace osxr
