#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "osxr/error.hpp"
#include "osxr/pipeline.hpp"
#include "osxr/service.hpp"
#include "osxr/synthetic.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string checkpoint;
  std::size_t epochs = 0;
  std::size_t pairs = 0;
  double like_fraction = 0.0;
  std::size_t k_augment = 0;
  std::size_t std_k = 0;
  std::string listen;
};

osxr::RunConfig resolve(const CLI::App& app, const Flags& f) {
  osxr::RunConfig cfg;
  if (!f.config.empty()) cfg = osxr::RunConfig::load(f.config, cfg);
  if (app.count("--seed")) cfg.seed = f.seed;
  if (app.count("--data-dir")) cfg.data_dir = f.data_dir;
  if (app.count("--checkpoint")) cfg.checkpoint = f.checkpoint;
  if (app.count("--epochs")) cfg.epochs = f.epochs;
  if (app.count("--pairs")) cfg.n_pairs = f.pairs;
  if (app.count("--like-fraction")) cfg.like_fraction = f.like_fraction;
  if (app.count("--k-augment")) cfg.k_augment = f.k_augment;
  if (app.count("--std-k")) cfg.std_k = f.std_k;
  if (app.count("--listen")) cfg.listen = f.listen;
  return cfg;
}

int serve(const CLI::App& app, const Flags& f) {
  osxr::ServiceConfig sc;
  if (!f.config.empty()) sc = osxr::ServiceConfig::load(f.config);
  sc.apply_environment();
  if (app.count("--data-dir")) sc.data_dir = f.data_dir;
  if (app.count("--checkpoint")) sc.checkpoint = f.checkpoint;
  if (app.count("--listen")) sc.set_listen(f.listen);
  if (app.count("--seed")) sc.policy.seed = f.seed;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  osxr::Service service(sc);
  const int port = service.start();
  std::printf("listening on %s:%d (checkpoint version %llu)\n", sc.host.c_str(), port,
              static_cast<unsigned long long>(service.status().at("checkpoint_version").get<std::uint64_t>()));
  std::fflush(stdout);
  int sig = 0;
  sigwait(&signals, &sig);
  service.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"osxr: few-shot chest X-ray triage with a Siamese energy model"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file (run config, or service config for serve)");
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--data-dir", f.data_dir, "Dataset directory holding manifest.tsv");
  app.add_option("--checkpoint", f.checkpoint, "Checkpoint path (default <data-dir>/model.osxr)");
  app.add_option("--epochs", f.epochs, "Siamese training epochs");
  app.add_option("--pairs", f.pairs, "Pairs sampled per epoch");
  app.add_option("--like-fraction", f.like_fraction, "Fraction of same-category pairs")->check(CLI::Range(0.0, 1.0));
  app.add_option("--k-augment", f.k_augment, "Generated variants per training image");
  app.add_option("--std-k", f.std_k, "Standard-set members per category");
  app.add_option("--listen", f.listen, "host:port for serve");

  osxr::SyntheticConfig syn;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic PGM corpus and manifest");
  gen->add_option("--n", syn.n_per_category, "Images per category")->check(CLI::PositiveNumber);
  gen->add_option("--noise", syn.noise_level, "Pixel noise level (fraction of full scale)");
  gen->add_option("--categories", syn.categories, "Subset of hbar, vbar, blob");
  gen->add_option("--size", syn.size, "Image side in pixels");

  auto* train_dagan = app.add_subcommand("train-dagan", "Train the augmentation GAN");
  auto* augment = app.add_subcommand("augment", "Add generated variants of the training images");
  auto* train_siamese = app.add_subcommand("train-siamese", "Train the embedding network and pick the standard set");
  std::string eval_json;
  auto* evaluate = app.add_subcommand("evaluate", "Score the held-out test split");
  evaluate->add_option("--json", eval_json, "Also write the report JSON here");
  std::string image;
  auto* diag = app.add_subcommand("diagnose", "Diagnose one PGM image");
  diag->add_option("image", image, "PGM file")->required();
  auto* srv = app.add_subcommand("serve", "Start the HTTP service");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      syn.seed = app.count("--seed") ? f.seed : syn.seed;
      const std::filesystem::path out = app.count("--data-dir") ? f.data_dir : "data";
      const auto m = osxr::gen_synthetic(out, syn);
      std::printf("wrote %zu images and %s\n", m.records.size(), (out / "manifest.tsv").string().c_str());
      return kOk;
    }
    if (srv->parsed()) return serve(app, f);

    const auto cfg = resolve(app, f);
    if (train_dagan->parsed()) {
      const auto r = osxr::train_dagan_stage(cfg);
      std::printf("dagan: %zu steps, final d_loss %.4f g_loss %.4f, checkpoint v%llu at %s\n", r.d_losses.size(),
                  r.d_losses.empty() ? 0.0 : r.d_losses.back(), r.g_losses.empty() ? 0.0 : r.g_losses.back(),
                  static_cast<unsigned long long>(r.version), cfg.checkpoint_path().string().c_str());
    } else if (augment->parsed()) {
      const auto n = osxr::augment_stage(cfg);
      std::printf("augment: added %zu generated images\n", n);
    } else if (train_siamese->parsed()) {
      const auto r = osxr::train_siamese_stage(cfg);
      std::printf("siamese: %zu epochs, final loss %.4f, %zu standard members, checkpoint v%llu\n",
                  r.epoch_losses.size(), r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back(), r.standard.size(),
                  static_cast<unsigned long long>(r.version));
    } else if (evaluate->parsed()) {
      const auto r = osxr::evaluate_stage(cfg);
      std::cout << r.report.to_text() << "\n" << osxr::to_text(r.dissimilarity);
      if (!eval_json.empty()) {
        std::ofstream out(eval_json);
        if (!out) throw osxr::IoError("cannot write " + eval_json);
        out << r.report.to_json().dump(2) << "\n";
      }
    } else if (diag->parsed()) {
      std::cout << osxr::to_text(osxr::diagnose_file(cfg, image));
    }
    return kOk;
  } catch (const osxr::CheckpointError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return kModel;
  } catch (const osxr::StateError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return kModel;
  } catch (const osxr::Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  }
}
