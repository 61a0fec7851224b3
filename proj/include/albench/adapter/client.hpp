#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "albench/adapter/process.hpp"
#include "albench/adapter/protocol.hpp"
#include "albench/dataset_io.hpp"
#include "albench/learner.hpp"

namespace albench::adapter {

using Millis = std::chrono::milliseconds;

/// Per-kind response deadlines; nullopt waits forever.
struct Timeouts {
  std::optional<Millis> hello = Millis(30'000);
  std::optional<Millis> train = std::nullopt;
  std::optional<Millis> predict = Millis(300'000);
  std::optional<Millis> shutdown = Millis(10'000);

  std::optional<Millis> for_kind(Kind k) const {
    switch (k) {
      case Kind::hello: return hello;
      case Kind::train:
      case Kind::train_ssl: return train;
      case Kind::predict: return predict;
      default: return shutdown;
    }
  }
};

/// Seconds per kind; null means unbounded.
inline Timeouts parse_timeouts(const Json& j) {
  Timeouts t;
  auto read = [&](const char* key, std::optional<Millis>& slot) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_null()) {
      slot.reset();
    } else {
      require(v.is_number() && v.get<double>() > 0, ErrorCode::config, std::string("timeouts.") + key + " must be positive");
      slot = Millis(static_cast<std::int64_t>(v.get<double>() * 1000.0));
    }
  };
  read("hello", t.hello);
  read("train", t.train);
  read("predict", t.predict);
  read("shutdown", t.shutdown);
  return t;
}

/// Full command line for `<command> --dataset <path> --seed <n>`.
inline std::string adapter_command_line(const std::string& command, const std::string& dataset, std::uint64_t seed) {
  return "exec " + command + " --dataset " + shell_quote(dataset) + " --seed " + std::to_string(seed);
}

/// Strict request/response alternation over one adapter process.
class Session {
 public:
  Session(const std::string& command, const std::string& dataset, std::uint64_t seed, Timeouts timeouts = {})
      : process_(adapter_command_line(command, dataset, seed)), timeouts_(timeouts) {}

  /// Sends a request with the next id and returns the matching response.
  Message request(Kind kind, Json payload) {
    const Message req{kind, ++next_id_, std::move(payload)};
    const auto resp = exchange(encode(req), timeouts_.for_kind(kind));
    require(resp.id == req.id, ErrorCode::protocol,
            "response id " + std::to_string(resp.id) + " does not match request " + std::to_string(req.id));
    return resp;
  }

  /// Like `request`, but error responses throw.
  Message call(Kind kind, Json payload) {
    auto resp = request(kind, std::move(payload));
    if (resp.kind == Kind::error) {
      fail(ErrorCode::runtime, "adapter error on " + to_string(kind) + " [" + resp.payload.value("code", "?") +
                                   "]: " + resp.payload.value("message", ""));
    }
    return resp;
  }

  /// Raw line exchange, for transcript replay.
  Message exchange(const std::string& line, std::optional<Millis> timeout) {
    try {
      process_.write_line(line);
    } catch (const Error&) {
      exited();
    }
    const auto reply = process_.read_line(timeout);
    if (!reply) exited();
    last_reply_ = *reply;
    return decode(*reply);
  }

  const std::string& last_reply() const { return last_reply_; }
  Process& process() { return process_; }

  void shutdown() {
    try {
      request(Kind::shutdown, Json::object());
    } catch (const Error&) {
    }
    process_.close_stdin();
  }

 private:
  [[noreturn]] void exited() {
    process_.wait_for(Millis(1000));
    const auto st = process_.exit_status();
    std::string detail;
    if (st && WIFEXITED(*st)) detail = " (exit status " + std::to_string(WEXITSTATUS(*st)) + ")";
    if (st && WIFSIGNALED(*st)) detail = " (signal " + std::to_string(WTERMSIG(*st)) + ")";
    fail(ErrorCode::runtime, "adapter exited without answering" + detail);
  }

  Process process_;
  Timeouts timeouts_;
  std::int64_t next_id_ = 0;
  std::string last_reply_;
};

// ---------------------------------------------------------------------------
// Dataset hand-off by reference

/// Self-deleting scratch directory.
class TempDir {
 public:
  explicit TempDir(const std::string& stem = "albench") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string sample_file_name(Index i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.%s", i, ext);
  return buf;
}

/// Layout read by adapters: classification as train.csv / test.csv;
/// segmentation as {train,test}/{images,masks}/NNNNNN.{ppm,pgm}.
inline void write_dataset_dir(const Split& s, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (s.train.task == Task::classification) {
    write_csv_dataset(s.train, dir / "train.csv");
    write_csv_dataset(s.test, dir / "test.csv");
    return;
  }
  for (const auto& [name, d] : {std::pair{"train", &s.train}, std::pair{"test", &s.test}}) {
    fs::create_directories(dir / name / "images");
    fs::create_directories(dir / name / "masks");
    for (Index i = 0; i < d->size(); ++i) {
      write_image(d->images[i], dir / name / "images" / sample_file_name(i, "ppm"));
      write_mask(d->masks[i], dir / name / "masks" / sample_file_name(i, "pgm"));
    }
  }
}

struct AdapterConfig {
  std::string command;
  Timeouts timeouts;
  /// Existing dataset directory; empty means write the split to a scratch dir.
  std::string dataset_dir;
  /// Forwarded to the adapter in every train request.
  Json config = Json::object();
  /// Request f32 base64 matrices instead of decimal arrays.
  bool b64 = false;
};

inline AdapterConfig parse_adapter_config(const Json& j) {
  AdapterConfig c;
  require(j.contains("command") && j.at("command").is_string(), ErrorCode::config, "adapter learner needs a command");
  c.command = j.at("command").get<std::string>();
  if (j.contains("timeouts")) c.timeouts = parse_timeouts(j.at("timeouts"));
  c.dataset_dir = j.value("dataset_dir", std::string{});
  c.config = j.value("config", Json::object());
  c.b64 = j.value("encoding", std::string("decimal")) == "b64";
  return c;
}

/// Learner backed by an external process. Every bundle is validated before
/// it reaches a strategy.
class AdapterLearner final : public Learner {
 public:
  AdapterLearner(const Split& data, AdapterConfig cfg, std::uint64_t seed) : data_(&data), cfg_(std::move(cfg)) {
    std::string dataset = cfg_.dataset_dir;
    if (dataset.empty()) {
      scratch_ = std::make_unique<TempDir>("albench-data");
      write_dataset_dir(data, scratch_->path());
      dataset = scratch_->path().string();
    }
    session_ = std::make_unique<Session>(cfg_.command, dataset, seed, cfg_.timeouts);
    const auto ack = session_->call(Kind::hello, Json{{"version", kProtocolVersion},
                                                      {"dataset", dataset},
                                                      {"seed", seed},
                                                      {"task", segmentation() ? "segmentation" : "classification"}});
    require(ack.kind == Kind::ack && ack.payload.value("version", 0) == kProtocolVersion, ErrorCode::protocol,
            "hello was not acknowledged with version " + std::to_string(kProtocolVersion));
    for (const auto& name : ack.payload.value("fields", std::vector<std::string>{})) {
      if (auto f = parse_bundle_field(name)) fields_.insert(*f);
    }
    name_ = "adapter:" + cfg_.command;
  }

  ~AdapterLearner() override {
    if (session_) session_->shutdown();
  }

  std::string name() const override { return name_; }
  FieldSet fields() const override { return fields_; }

  void train(const TrainRequest& req) override {
    Json p{{"labeled", req.labeled},
           {"mode", to_string(req.mode)},
           {"ensemble_size", req.ensemble_size},
           {"seed", req.seed},
           {"config", cfg_.config}};
    std::unique_ptr<TempDir> labels;
    if (segmentation()) {
      labels = std::make_unique<TempDir>("albench-labels");
      for (const auto& [i, m] : req.masks) write_mask(m, labels->path() / sample_file_name(i, "pgm"));
      p["label_dir"] = labels->path().string();
    }
    if (req.ssl) p["unlabeled"] = req.unlabeled;
    const auto resp = session_->call(req.ssl ? Kind::train_ssl : Kind::train, std::move(p));
    require(resp.kind == Kind::ack, ErrorCode::protocol, "train answered with '" + to_string(resp.kind) + "'");
  }

  PredictionBundle predict(std::span<const Index> indices, const FieldSet& fields, SplitKind split) override {
    const auto resp = session_->call(Kind::predict, request(indices, field_names(fields), split));
    auto b = decode_bundle(resp.payload, data_->train.num_classes);
    require(b.indices.size() == indices.size() && std::equal(indices.begin(), indices.end(), b.indices.begin()),
            ErrorCode::protocol, "bundle rows do not follow the requested indices");
    require(b.fields() == fields, ErrorCode::protocol, "bundle fields differ from the request");
    return b;
  }

  std::vector<LabelMask> predict_masks(std::span<const Index> indices, SplitKind split) override {
    require(segmentation(), ErrorCode::invalid_argument, "masks are only defined for segmentation");
    const auto resp = session_->call(Kind::predict, request(indices, {kMasksField}, split));
    require(resp.payload.contains(kMasksField) && resp.payload.at(kMasksField).is_array(), ErrorCode::protocol,
            "bundle lacks masks");
    const auto& list = resp.payload.at(kMasksField);
    require(list.size() == indices.size(), ErrorCode::protocol, "mask count does not match the request");
    const Dataset& d = split == SplitKind::train ? data_->train : data_->test;
    std::vector<LabelMask> out;
    for (std::size_t k = 0; k < list.size(); ++k) {
      auto m = decode_mask(list[k]);
      const auto& ref = d.masks.at(indices[k]);
      require(m.width == ref.width && m.height == ref.height, ErrorCode::protocol, "mask shape differs from the image");
      out.push_back(std::move(m));
    }
    return out;
  }

 private:
  bool segmentation() const { return data_->train.task == Task::segmentation; }

  Json request(std::span<const Index> indices, const std::vector<std::string>& fields, SplitKind split) const {
    Json p{{"indices", std::vector<Index>(indices.begin(), indices.end())},
           {"fields", fields},
           {"split", to_string(split)}};
    if (cfg_.b64) p["encoding"] = "b64";
    return p;
  }

  const Split* data_;
  AdapterConfig cfg_;
  std::unique_ptr<TempDir> scratch_;
  std::unique_ptr<Session> session_;
  FieldSet fields_;
  std::string name_;
};

}  // namespace albench::adapter
