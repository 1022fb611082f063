#include "osxr/service.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <regex>
#include <thread>

#include "httplib.h"
#include "osxr/error.hpp"
#include "osxr/pipeline.hpp"

namespace osxr {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void ServiceConfig::set_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == listen.size()) {
    throw DomainError("listen address must be host:port, got '" + listen + "'");
  }
  host = listen.substr(0, colon);
  try {
    std::size_t used = 0;
    port = std::stoi(listen.substr(colon + 1), &used);
    if (used != listen.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
  } catch (const std::exception&) {
    throw DomainError("bad port in listen address '" + listen + "'");
  }
}

std::map<std::string, Role> load_token_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open token table " + file.string());
  std::map<std::string, Role> out;
  try {
    const auto j = json::parse(in);
    for (const auto& [token, role] : j.items()) out[token] = parse_role(role.get<std::string>());
  } catch (const json::exception& e) {
    throw DomainError("token table " + file.string() + ": " + e.what());
  }
  return out;
}

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base_dir) {
  ServiceConfig c;
  auto path_of = [&](const std::string& key) {
    fs::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    if (j.contains("listen")) c.set_listen(j.at("listen").get<std::string>());
    if (j.contains("data_dir")) c.data_dir = path_of("data_dir");
    if (j.contains("checkpoint")) c.checkpoint = path_of("checkpoint");
    if (j.contains("manifest")) c.manifest = path_of("manifest");
    if (j.contains("token_table")) c.tokens = load_token_table(path_of("token_table"));
    if (j.contains("tokens")) {
      for (const auto& [token, role] : j.at("tokens").items()) c.tokens[token] = parse_role(role.get<std::string>());
    }
    c.inference_workers = j.value("inference_workers", c.inference_workers);
    c.include_attention = j.value("include_attention", c.include_attention);
    if (j.contains("retrain")) {
      const auto& r = j.at("retrain");
      auto& p = c.policy;
      p.trigger_threshold = r.value("trigger_threshold", p.trigger_threshold);
      p.epochs = r.value("epochs", p.epochs);
      p.delta = r.value("delta", p.delta);
      p.n_pairs = r.value("n_pairs", p.n_pairs);
      p.like_fraction = r.value("like_fraction", p.like_fraction);
      p.batch_size = r.value("batch_size", p.batch_size);
      p.learning_rate = r.value("learning_rate", p.learning_rate);
      p.margin = r.value("margin", p.margin);
      p.seed = r.value("seed", p.seed);
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("service config: ") + e.what());
  }
  c.policy.validate();
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open service config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DomainError("service config " + file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

void ServiceConfig::apply_environment() {
  if (const char* v = std::getenv("OSXR_LISTEN"); v && *v) set_listen(v);
  if (const char* v = std::getenv("OSXR_DATA_DIR"); v && *v) data_dir = v;
}

// ---------------------------------------------------------------------------
// Wire format

double round4(double v) { return std::round(v * 1e4) / 1e4; }

json diagnosis_to_json(const Diagnosis& d, bool include_attention) {
  json means = json::object();
  for (const auto& [c, e] : d.per_category_mean_energy) means[c] = round4(e);
  json members = json::object();
  for (const auto& [c, list] : d.per_member_energies) {
    json arr = json::array();
    for (double e : list) arr.push_back(round4(e));
    members[c] = arr;
  }
  json out = {{"predicted_category", d.predicted_category},
              {"per_category_mean_energy", means},
              {"per_member_energies", members},
              {"checkpoint_version", d.checkpoint_version},
              {"attention_map", nullptr}};
  if (include_attention && d.attention_map) {
    const auto img = image_from_unit(*d.attention_map, d.attention_height, d.attention_width);
    const auto pgm = encode_pgm(img);
    out["attention_map"] = {{"width", d.attention_width},
                            {"height", d.attention_height},
                            {"format", "pgm"},
                            {"encoding", "base64"},
                            {"data", httplib::detail::base64_encode(std::string(pgm.begin(), pgm.end()))}};
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

enum class SampleState { received, diagnosing, diagnosed, failed };

std::string_view to_string(SampleState s) {
  switch (s) {
    case SampleState::received: return "received";
    case SampleState::diagnosing: return "diagnosing";
    case SampleState::diagnosed: return "diagnosed";
    case SampleState::failed: return "failed";
  }
  return "received";
}

SampleState parse_state(const std::string& s) {
  if (s == "received") return SampleState::received;
  if (s == "diagnosing") return SampleState::diagnosing;
  if (s == "diagnosed") return SampleState::diagnosed;
  if (s == "failed") return SampleState::failed;
  throw DomainError("unknown sample state '" + s + "'");
}

struct SampleRecord {
  std::string id;
  std::string uploader_role;
  SampleState state = SampleState::received;
  std::string received_at;
  json diagnosis;  // null until diagnosed
  std::string error;
};

json record_json(const SampleRecord& r) {
  return {{"sample_id", r.id},
          {"uploader_role", r.uploader_role},
          {"state", to_string(r.state)},
          {"received_at", r.received_at},
          {"diagnosis", r.diagnosis},
          {"error", r.error}};
}

void write_atomic(const fs::path& file, const std::string& content) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, file);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  ModelSlot slot;
  SubmissionQueue queue;
  std::unique_ptr<SemiLiveTrainer> trainer;

  mutable std::mutex rec_mu;
  std::map<std::string, SampleRecord> records;

  struct Job {
    std::string id;
    std::vector<std::uint8_t> pgm;
  };
  std::mutex job_mu;
  std::condition_variable job_cv;
  std::condition_variable done_cv;
  std::deque<Job> jobs;
  std::size_t active = 0;
  bool stopping = false;
  std::vector<std::thread> workers;

  std::thread server_thread;
  int bound_port = -1;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
    fs::create_directories(cfg.data_dir / "samples");
    fs::create_directories(cfg.data_dir / "labels");
    fs::create_directories(cfg.data_dir / "checkpoints");
    load_model();
    queue.set_categories(slot.snapshot()->categories());
    setup_trainer();
    restore_records();
    const std::size_t n = std::max<std::size_t>(1, cfg.inference_workers);
    for (std::size_t i = 0; i < n; ++i) workers.emplace_back([this] { worker_loop(); });
    setup_routes();
  }

  ~Impl() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    {
      std::lock_guard lock(job_mu);
      stopping = true;
    }
    job_cv.notify_all();
    for (auto& w : workers) w.join();
    trainer.reset();
  }

  fs::path checkpoints_dir() const { return cfg.data_dir / "checkpoints"; }

  void persist_checkpoint(const ModelCheckpoint& ckpt) {
    const std::string name = "v" + std::to_string(ckpt.version) + ".osxr";
    save_checkpoint(checkpoints_dir() / name, ckpt);
    write_atomic(checkpoints_dir() / "CURRENT", name + "\n");
  }

  void load_model() {
    const auto current = checkpoints_dir() / "CURRENT";
    ModelCheckpoint ckpt;
    if (fs::exists(current)) {
      auto name = read_file(current);
      while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
      ckpt = load_checkpoint(checkpoints_dir() / name);
    } else if (!cfg.checkpoint.empty()) {
      ckpt = load_checkpoint(cfg.checkpoint);
      persist_checkpoint(ckpt);
    } else {
      throw CheckpointError("service: no checkpoint configured and none stored under " + checkpoints_dir().string());
    }
    if (!ckpt.network || ckpt.standard.empty()) {
      throw CheckpointError("service: checkpoint lacks an embedding network or standard set");
    }
    slot.publish(std::make_shared<const ModelCheckpoint>(std::move(ckpt)));
  }

  void setup_trainer() {
    if (cfg.manifest.empty()) return;
    const auto manifest = DatasetManifest::load(cfg.manifest);
    const auto base = cfg.manifest.parent_path();
    RetrainData data;
    data.train = load_split(manifest, base, Split::train, false);
    data.standard = load_split(manifest, base, Split::standard, true);
    data.val = load_split(manifest, base, Split::val, true);
    if (data.val.empty()) data.val = load_split(manifest, base, Split::test, true);
    trainer = std::make_unique<SemiLiveTrainer>(slot, queue, cfg.policy, std::move(data),
                                                [this](const ModelCheckpoint& c) { persist_checkpoint(c); });
  }

  void save_record(const SampleRecord& r) {
    write_atomic(cfg.data_dir / "samples" / r.id / "record.json", record_json(r).dump());
  }

  void restore_records() {
    for (const auto& entry : fs::directory_iterator(cfg.data_dir / "samples")) {
      const auto file = entry.path() / "record.json";
      if (!entry.is_directory() || !fs::exists(file)) continue;
      SampleRecord r;
      try {
        const auto j = json::parse(read_file(file));
        r.id = j.at("sample_id").get<std::string>();
        r.uploader_role = j.value("uploader_role", "");
        r.state = parse_state(j.at("state").get<std::string>());
        r.received_at = j.value("received_at", "");
        r.diagnosis = j.value("diagnosis", json(nullptr));
        r.error = j.value("error", "");
      } catch (const std::exception&) {
        continue;
      }
      if (r.state == SampleState::received || r.state == SampleState::diagnosing) {
        r.state = SampleState::received;
        const auto raw = read_file(entry.path() / "image.pgm");
        jobs.push_back({r.id, std::vector<std::uint8_t>(raw.begin(), raw.end())});
      }
      records[r.id] = std::move(r);
    }
  }

  void set_state(const std::string& id, SampleState state, json diagnosis = nullptr, std::string error = {}) {
    SampleRecord copy;
    {
      std::lock_guard lock(rec_mu);
      auto& r = records.at(id);
      r.state = state;
      if (!diagnosis.is_null()) r.diagnosis = std::move(diagnosis);
      if (!error.empty()) r.error = std::move(error);
      copy = r;
    }
    save_record(copy);
  }

  void worker_loop() {
    while (true) {
      Job job;
      {
        std::unique_lock lock(job_mu);
        job_cv.wait(lock, [this] { return stopping || !jobs.empty(); });
        if (stopping) return;
        job = std::move(jobs.front());
        jobs.pop_front();
        ++active;
      }
      try {
        set_state(job.id, SampleState::diagnosing);
        const auto model = slot.snapshot();
        const auto d = diagnose(decode_pgm(job.pgm), model->standard, *model->network, model->version,
                                cfg.include_attention);
        set_state(job.id, SampleState::diagnosed, diagnosis_to_json(d, cfg.include_attention));
      } catch (const std::exception& e) {
        try {
          set_state(job.id, SampleState::failed, nullptr, e.what());
        } catch (...) {
        }
      }
      {
        std::lock_guard lock(job_mu);
        --active;
      }
      done_cv.notify_all();
    }
  }

  void schedule(Job job) {
    {
      std::lock_guard lock(job_mu);
      jobs.push_back(std::move(job));
    }
    job_cv.notify_one();
  }

  std::optional<Role> authenticate(const httplib::Request& req, httplib::Response& res) {
    const auto header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0) {
      send_error(res, 401, "unauthorized", "missing bearer token");
      return std::nullopt;
    }
    auto it = cfg.tokens.find(header.substr(prefix.size()));
    if (it == cfg.tokens.end()) {
      send_error(res, 401, "unauthorized", "unknown token");
      return std::nullopt;
    }
    return it->second;
  }

  json status() const {
    const auto model = slot.snapshot();
    json sizes = json::object();
    for (const auto& [c, members] : model->standard.by_category) sizes[c] = members.size();
    return {{"checkpoint_version", model->version},
            {"categories", model->categories()},
            {"standard_set_sizes", sizes},
            {"queue_length", queue.queued_count()},
            {"training", trainer && trainer->training() ? "running" : "idle"},
            {"last_eval", model->info.value("last_eval", json(nullptr))}};
  }

  void setup_routes() {
    server.set_payload_max_length(64 * 1024 * 1024);

    server.Post("/v1/samples", [this](const httplib::Request& req, httplib::Response& res) {
      const auto role = authenticate(req, res);
      if (!role) return;
      std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
      try {
        decode_pgm(bytes);
      } catch (const FormatError& e) {
        send_error(res, 400, "invalid_image", e.what());
        return;
      }
      SampleRecord r;
      r.id = new_id();
      r.uploader_role = std::string(to_string(*role));
      r.received_at = utc_timestamp();
      const auto dir = cfg.data_dir / "samples" / r.id;
      try {
        fs::create_directories(dir);
        write_atomic(dir / "image.pgm", req.body);
        save_record(r);
      } catch (const std::exception& e) {
        send_error(res, 500, "storage_error", e.what());
        return;
      }
      {
        std::lock_guard lock(rec_mu);
        records[r.id] = r;
      }
      schedule({r.id, std::move(bytes)});
      send_json(res, 202, {{"sample_id", r.id}, {"state", "received"}});
    });

    server.Get(R"(/v1/samples/([^/]+)/diagnosis)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      SampleRecord r;
      {
        std::lock_guard lock(rec_mu);
        auto it = records.find(id);
        if (it == records.end()) {
          send_error(res, 404, "not_found", "no sample with id '" + id + "'");
          return;
        }
        r = it->second;
      }
      switch (r.state) {
        case SampleState::diagnosed: send_json(res, 200, r.diagnosis); return;
        case SampleState::failed: send_error(res, 500, "diagnosis_failed", r.error); return;
        default: send_json(res, 202, {{"sample_id", id}, {"state", to_string(r.state)}}); return;
      }
    });

    server.Post("/v1/labels", [this](const httplib::Request& req, httplib::Response& res) {
      const auto role = authenticate(req, res);
      if (!role) return;
      std::string category = req.get_param_value("category");
      if (category.empty()) category = req.get_header_value("X-Category");
      const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
      const std::string id = new_id();
      if (*role != Role::doctor) {
        try {
          queue.enqueue_pgm(id, bytes, category, "patient", Role::patient);
        } catch (const std::exception&) {
        }
        send_error(res, 403, "forbidden", "only doctor accounts may submit labels");
        return;
      }
      if (category.empty()) {
        send_error(res, 400, "missing_category", "the category query parameter is required");
        return;
      }
      std::size_t queued = 0;
      try {
        queued = queue.enqueue_pgm(id, bytes, category, "doctor", Role::doctor);
      } catch (const FormatError& e) {
        send_error(res, 400, "invalid_image", e.what());
        return;
      } catch (const DomainError& e) {
        send_error(res, 400, "unknown_category", e.what());
        return;
      }
      try {
        write_atomic(cfg.data_dir / "labels" / (id + ".pgm"), req.body);
        write_atomic(cfg.data_dir / "labels" / (id + ".json"),
                     json{{"sample_id", id}, {"category", category}, {"received_at", utc_timestamp()}}.dump());
      } catch (const std::exception&) {
      }
      if (trainer) trainer->maybe_trigger_retrain();
      send_json(res, 202, {{"sample_id", id}, {"queued_count", queued}});
    });

    server.Get("/v1/model/status", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, status());
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
                   "request failed with status " + std::to_string(res.status));
      }
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      send_error(res, 500, "internal", msg);
    });
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::bind() {
  auto& s = impl_->server;
  if (impl_->cfg.port == 0) {
    impl_->bound_port = s.bind_to_any_port(impl_->cfg.host);
  } else {
    impl_->bound_port = s.bind_to_port(impl_->cfg.host, impl_->cfg.port) ? impl_->cfg.port : -1;
  }
  if (impl_->bound_port < 0) {
    throw IoError("cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
  }
  return impl_->bound_port;
}

void Service::run() { impl_->server.listen_after_bind(); }

int Service::start() {
  const int p = bind();
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return p;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

int Service::port() const noexcept { return impl_->bound_port; }
ModelSlot& Service::slot() noexcept { return impl_->slot; }
SubmissionQueue& Service::queue() noexcept { return impl_->queue; }
SemiLiveTrainer* Service::trainer() noexcept { return impl_->trainer.get(); }
nlohmann::json Service::status() const { return impl_->status(); }

void Service::drain() {
  std::unique_lock lock(impl_->job_mu);
  impl_->done_cv.wait(lock, [this] { return impl_->jobs.empty() && impl_->active == 0; });
}

}  // namespace osxr
