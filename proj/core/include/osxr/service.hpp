#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "osxr/checkpoint.hpp"
#include "osxr/inference.hpp"
#include "osxr/semilive.hpp"

namespace osxr {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  std::filesystem::path data_dir = "service-data";
  std::map<std::string, Role> tokens;
  /// Served when data_dir/checkpoints holds no CURRENT pointer yet.
  std::filesystem::path checkpoint;
  /// Optional training manifest; enables semi-live retraining when set.
  std::filesystem::path manifest;
  RetrainPolicy policy;
  std::size_t inference_workers = 2;
  bool include_attention = true;

  /// Parses "host:port".
  void set_listen(const std::string& listen);
  /// Relative paths in the file are resolved against `base_dir`.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& file);
  /// OSXR_LISTEN and OSXR_DATA_DIR take precedence over the file.
  void apply_environment();
};

/// Reads a JSON object mapping token -> "doctor" | "patient".
std::map<std::string, Role> load_token_table(const std::filesystem::path& file);

/// Wire form of a diagnosis: energies rounded to 4 decimals, attention map
/// as base64-encoded PGM.
nlohmann::json diagnosis_to_json(const Diagnosis& d, bool include_attention);

double round4(double v);

/// HTTP front of the diagnosis engine with file-backed persistence.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves on the calling thread until stop().
  void run();
  /// bind() and run() on a background thread; returns the port.
  int start();
  void stop();

  int port() const noexcept;
  ModelSlot& slot() noexcept;
  SubmissionQueue& queue() noexcept;
  /// Null when no training manifest was configured.
  SemiLiveTrainer* trainer() noexcept;
  nlohmann::json status() const;
  /// Blocks until every scheduled inference job has finished.
  void drain();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace osxr
