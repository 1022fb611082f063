#include "osxr/semilive.hpp"

#include "osxr/error.hpp"
#include "osxr/inference.hpp"
#include "osxr/optim.hpp"
#include "osxr/siamese.hpp"

namespace osxr {

std::string_view to_string(Role role) { return role == Role::doctor ? "doctor" : "patient"; }

Role parse_role(std::string_view text) {
  if (text == "doctor") return Role::doctor;
  if (text == "patient") return Role::patient;
  throw DomainError("unknown role '" + std::string(text) + "'");
}

std::string_view to_string(SubmissionStatus status) {
  switch (status) {
    case SubmissionStatus::queued: return "queued";
    case SubmissionStatus::consumed: return "consumed";
    case SubmissionStatus::rejected: return "rejected";
  }
  return "queued";
}

// ---------------------------------------------------------------------------

SubmissionQueue::SubmissionQueue(std::vector<std::string> known_categories)
    : categories_(known_categories.begin(), known_categories.end()) {}

std::size_t SubmissionQueue::enqueue(LabeledSubmission submission) {
  std::lock_guard lock(mu_);
  if (!categories_.count(submission.category)) {
    throw DomainError("unknown category '" + submission.category + "'");
  }
  if (submission.image.empty()) throw DomainError("submission '" + submission.sample_id + "' has no image");
  if (submission.received_at == std::chrono::system_clock::time_point{}) {
    submission.received_at = std::chrono::system_clock::now();
  }
  submission.status = submission.role == Role::doctor ? SubmissionStatus::queued : SubmissionStatus::rejected;
  items_.push_back(std::move(submission));
  std::size_t n = 0;
  for (const auto& s : items_) n += s.status == SubmissionStatus::queued;
  return n;
}

std::size_t SubmissionQueue::enqueue_pgm(std::string sample_id, std::span<const std::uint8_t> pgm,
                                         std::string category, std::string submitter, Role role) {
  LabeledSubmission s;
  s.sample_id = std::move(sample_id);
  s.image = decode_pgm(pgm);
  s.category = std::move(category);
  s.submitter = std::move(submitter);
  s.role = role;
  return enqueue(std::move(s));
}

std::size_t SubmissionQueue::queued_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& s : items_) n += s.status == SubmissionStatus::queued;
  return n;
}

std::vector<LabeledSubmission> SubmissionQueue::claim_queued() {
  std::lock_guard lock(mu_);
  std::vector<LabeledSubmission> out;
  for (auto& s : items_) {
    if (s.status != SubmissionStatus::queued) continue;
    s.status = SubmissionStatus::consumed;
    out.push_back(s);
  }
  return out;
}

std::vector<LabeledSubmission> SubmissionQueue::all() const {
  std::lock_guard lock(mu_);
  return items_;
}

void SubmissionQueue::set_categories(std::vector<std::string> categories) {
  std::lock_guard lock(mu_);
  categories_ = {categories.begin(), categories.end()};
}

std::vector<std::string> SubmissionQueue::categories() const {
  std::lock_guard lock(mu_);
  return {categories_.begin(), categories_.end()};
}

// ---------------------------------------------------------------------------

void RetrainPolicy::validate() const {
  if (trigger_threshold < 1) throw DomainError("retrain policy: trigger threshold must be at least 1");
  if (!(delta >= 0.0)) throw DomainError("retrain policy: delta must be nonnegative");
  if (epochs < 1) throw DomainError("retrain policy: epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw DomainError("retrain policy: learning rate must be positive");
  if (batch_size < 1) throw DomainError("retrain policy: batch size must be at least 1");
}

std::shared_ptr<const ModelCheckpoint> ModelSlot::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

void ModelSlot::publish(std::shared_ptr<const ModelCheckpoint> next) {
  std::lock_guard lock(mu_);
  current_ = std::move(next);
}

double validation_accuracy(std::span<const ImageSample> samples, const ModelCheckpoint& ckpt) {
  if (samples.empty()) throw DomainError("validation_accuracy: empty validation set");
  if (!ckpt.network) throw StateError("validation_accuracy: checkpoint has no embedding network");
  const auto predicted = predict_categories(samples, ckpt.standard, *ckpt.network);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += predicted[i] == samples[i].category;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------

SemiLiveTrainer::SemiLiveTrainer(ModelSlot& slot, SubmissionQueue& queue, RetrainPolicy policy, RetrainData data,
                                 Persist persist)
    : slot_(slot), queue_(queue), policy_(policy), data_(std::move(data)), persist_(std::move(persist)) {
  policy_.validate();
  if (data_.val.empty()) throw DomainError("semi-live trainer: a validation set is required");
}

SemiLiveTrainer::~SemiLiveTrainer() { wait_idle(); }

TriggerResult SemiLiveTrainer::maybe_trigger_retrain() {
  if (running_.load() || queue_.queued_count() < policy_.trigger_threshold) return TriggerResult::no_action;
  bool expected = false;
  if (!running_.compare_exchange_strong(expected, true)) return TriggerResult::no_action;
  std::lock_guard lock(mu_);
  if (worker_.joinable()) worker_.join();
  worker_ = std::jthread([this] {
    RetrainOutcome outcome;
    try {
      outcome = retrain_and_swap();
    } catch (const std::exception& e) {
      outcome.reason = std::string("error: ") + e.what();
      if (auto cur = slot_.snapshot()) outcome.version = cur->version;
    }
    finish(std::move(outcome));
  });
  return TriggerResult::training_started;
}

RetrainOutcome SemiLiveTrainer::retrain_now() {
  bool expected = false;
  if (!running_.compare_exchange_strong(expected, true)) {
    throw ContractError("retrain_now: a retrain is already running");
  }
  RetrainOutcome outcome;
  try {
    outcome = retrain_and_swap();
  } catch (...) {
    finish({});
    throw;
  }
  finish(outcome);
  return outcome;
}

void SemiLiveTrainer::finish(RetrainOutcome outcome) {
  {
    std::lock_guard lock(mu_);
    last_ = std::move(outcome);
    running_.store(false);
  }
  idle_cv_.notify_all();
}

void SemiLiveTrainer::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return !running_.load(); });
}

std::optional<RetrainOutcome> SemiLiveTrainer::last_outcome() const {
  std::lock_guard lock(mu_);
  return last_;
}

RetrainOutcome SemiLiveTrainer::retrain_and_swap() {
  const auto current = slot_.snapshot();
  if (!current || !current->network) throw StateError("retrain: no serving checkpoint with an embedding network");
  const auto claimed = queue_.claim_queued();
  const std::uint64_t run = runs_++;

  RetrainOutcome outcome;
  outcome.consumed = claimed.size();
  outcome.version = current->version;

  std::vector<ImageSample> corpus = data_.train;
  for (const auto& s : claimed) {
    corpus.push_back({s.sample_id, s.image, s.category, Source::user, Split::train});
  }

  auto candidate_net = current->network->clone();
  auto params = candidate_net.parameters();
  for (auto& p : params) p.clear_grad();
  auto optimizer = Optimizer::adam(policy_.learning_rate);
  const LossConfig loss{policy_.margin};
  const std::uint64_t base_seed = derive_seed(policy_.seed, run);
  for (std::size_t e = 0; e < policy_.epochs; ++e) {
    const PairConfig pc{policy_.n_pairs, policy_.like_fraction, derive_seed(base_seed, 2 * e),
                        candidate_net.config().input_size};
    const auto pairs = make_pairs(corpus, pc);
    train_epoch(pairs, candidate_net, loss, optimizer, {policy_.batch_size, derive_seed(base_seed, 2 * e + 1)});
  }

  auto candidate = std::make_shared<ModelCheckpoint>(*current);
  candidate->network = candidate_net;
  refresh_latents(candidate->standard, data_.standard, candidate_net);

  outcome.old_accuracy = validation_accuracy(data_.val, *current);
  outcome.new_accuracy = validation_accuracy(data_.val, *candidate);
  if (outcome.new_accuracy < outcome.old_accuracy - policy_.delta) {
    outcome.reason = "validation_regression";
    return outcome;
  }

  candidate->version = current->version + 1;
  candidate->info["created_at"] = utc_timestamp();
  candidate->info["semi_live"] = {{"consumed", claimed.size()},
                                  {"old_val_accuracy", outcome.old_accuracy},
                                  {"new_val_accuracy", outcome.new_accuracy}};
  candidate->info["last_eval"] = {{"source", "semi_live_validation"},
                                  {"n", data_.val.size()},
                                  {"accuracy", outcome.new_accuracy}};
  if (persist_) {
    try {
      persist_(*candidate);
    } catch (const std::exception&) {
      outcome.reason = "persist_failed";
      return outcome;
    }
  }
  slot_.publish(candidate);
  outcome.swapped = true;
  outcome.version = candidate->version;
  outcome.reason = "swapped";
  return outcome;
}

}  // namespace osxr
