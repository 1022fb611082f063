#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "osxr/checkpoint.hpp"
#include "osxr/dataset.hpp"
#include "osxr/image.hpp"

namespace osxr {

enum class Role { doctor, patient };
enum class SubmissionStatus { queued, consumed, rejected };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);
std::string_view to_string(SubmissionStatus status);

struct LabeledSubmission {
  std::string sample_id;
  Image image;
  std::string category;
  std::string submitter;
  Role role = Role::doctor;
  std::chrono::system_clock::time_point received_at{};
  SubmissionStatus status = SubmissionStatus::queued;
};

/// Thread-safe store of labelled uploads. Doctor submissions are queued for
/// training; patient submissions are kept for audit but never consumed.
class SubmissionQueue {
 public:
  explicit SubmissionQueue(std::vector<std::string> known_categories = {});

  /// Throws DomainError for an unknown category or an empty image; nothing is stored then.
  /// Returns the number of queued submissions afterwards.
  std::size_t enqueue(LabeledSubmission submission);

  /// Decodes PGM bytes first; FormatError leaves the queue untouched.
  std::size_t enqueue_pgm(std::string sample_id, std::span<const std::uint8_t> pgm, std::string category,
                          std::string submitter, Role role);

  std::size_t queued_count() const;
  /// Moves every queued submission to consumed and returns copies of them.
  std::vector<LabeledSubmission> claim_queued();
  std::vector<LabeledSubmission> all() const;

  void set_categories(std::vector<std::string> categories);
  std::vector<std::string> categories() const;

 private:
  mutable std::mutex mu_;
  std::set<std::string> categories_;
  std::vector<LabeledSubmission> items_;
};

struct RetrainPolicy {
  std::size_t trigger_threshold = 50;
  std::size_t epochs = 5;
  double delta = 0.01;
  std::size_t n_pairs = 600;
  double like_fraction = 0.5;
  std::size_t batch_size = 32;
  double learning_rate = 5e-4;
  double margin = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Holds the serving checkpoint. Readers take a snapshot and keep using it
/// for the whole request; publish replaces the reference in one step.
class ModelSlot {
 public:
  ModelSlot() = default;
  explicit ModelSlot(std::shared_ptr<const ModelCheckpoint> initial) : current_(std::move(initial)) {}

  std::shared_ptr<const ModelCheckpoint> snapshot() const;
  void publish(std::shared_ptr<const ModelCheckpoint> next);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const ModelCheckpoint> current_;
};

enum class TriggerResult { no_action, training_started };

struct RetrainOutcome {
  bool swapped = false;
  std::uint64_t version = 0;  // serving version after the run
  std::string reason;         // "swapped", "validation_regression" or "persist_failed"
  double old_accuracy = 0.0;
  double new_accuracy = 0.0;
  std::size_t consumed = 0;
};

/// Data the fine-tuning job draws from.
struct RetrainData {
  std::vector<ImageSample> train;     // existing training corpus
  std::vector<ImageSample> val;       // held validation set for the guard
  std::vector<ImageSample> standard;  // images of the standard-set members
};

class SemiLiveTrainer {
 public:
  using Persist = std::function<void(const ModelCheckpoint&)>;

  /// `persist` runs before publication; if it throws, the swap is abandoned.
  SemiLiveTrainer(ModelSlot& slot, SubmissionQueue& queue, RetrainPolicy policy, RetrainData data,
                  Persist persist = {});
  ~SemiLiveTrainer();
  SemiLiveTrainer(const SemiLiveTrainer&) = delete;
  SemiLiveTrainer& operator=(const SemiLiveTrainer&) = delete;

  /// Starts a background retrain iff the queue holds at least the threshold
  /// and no retrain is running. Safe to call from many threads.
  TriggerResult maybe_trigger_retrain();

  /// Runs a retrain on the calling thread, claiming whatever is queued.
  /// Throws ContractError if another retrain is already running.
  RetrainOutcome retrain_now();

  bool training() const noexcept { return running_.load(); }
  void wait_idle();
  std::optional<RetrainOutcome> last_outcome() const;
  const RetrainPolicy& policy() const noexcept { return policy_; }

 private:
  RetrainOutcome retrain_and_swap();
  void finish(RetrainOutcome outcome);

  ModelSlot& slot_;
  SubmissionQueue& queue_;
  RetrainPolicy policy_;
  RetrainData data_;
  Persist persist_;
  std::atomic<bool> running_{false};
  std::uint64_t runs_ = 0;
  mutable std::mutex mu_;
  std::condition_variable idle_cv_;
  std::optional<RetrainOutcome> last_;
  std::jthread worker_;
};

/// Fraction of `samples` whose predicted category matches their label.
double validation_accuracy(std::span<const ImageSample> samples, const ModelCheckpoint& ckpt);

}  // namespace osxr
