#pragma once

#include <chrono>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "albench/adapter/protocol.hpp"

namespace albench::adapter {

struct TrainCall {
  std::vector<Index> labeled;
  std::vector<Index> unlabeled;
  TrainMode mode = TrainMode::supervised;
  bool ssl = false;
  int ensemble_size = 5;
  std::uint64_t seed = 0;
  /// Learner settings forwarded verbatim from the experiment config.
  Json config = Json::object();
  /// Segmentation: directory of <index>.pgm label masks, 255 = ignore.
  std::string label_dir;
};

/// The model side of an adapter. Errors are reported by throwing Error;
/// ErrorCode::io maps to "io", invalid_argument to "bad_request".
class Backend {
 public:
  virtual ~Backend() = default;

  virtual void open(const std::string& dataset, std::uint64_t seed, const std::string& task) = 0;
  virtual FieldSet fields() const = 0;
  virtual bool segmentation() const { return false; }
  /// Returns the final training loss.
  virtual double train(const TrainCall& call) = 0;
  virtual PredictionBundle predict(std::span<const Index> indices, const FieldSet& fields, SplitKind split) = 0;
  virtual std::vector<LabelMask> predict_masks(std::span<const Index>, SplitKind) {
    fail(ErrorCode::missing_field, "masks are not supported");
  }
};

/// Protocol state machine over one session. Owns no I/O; `serve` wires it to
/// streams.
class Server {
 public:
  explicit Server(Backend& backend, int version = kProtocolVersion) : backend_(backend), version_(version) {}

  bool finished() const { return finished_; }

  Message handle(const std::string& line) {
    Message req;
    try {
      req = decode(line);
    } catch (const Error& e) {
      return error_message(salvage_id(line), codes::protocol, e.what());
    }
    if (!is_request(req.kind)) {
      return error_message(req.id, codes::protocol, "'" + to_string(req.kind) + "' is not a request");
    }
    if (req.id <= last_id_) {
      return error_message(req.id, codes::protocol,
                           "request id " + std::to_string(req.id) + " is not greater than " + std::to_string(last_id_));
    }
    last_id_ = req.id;
    try {
      return dispatch(req);
    } catch (const Error& e) {
      return error_message(req.id, code_for(e.code()), e.what());
    } catch (const Json::exception& e) {
      return error_message(req.id, codes::bad_request, e.what());
    } catch (const std::exception& e) {
      return error_message(req.id, codes::internal, e.what());
    }
  }

  /// Reads requests until shutdown, a fatal error or end of input.
  void serve(std::istream& in, std::ostream& out) {
    std::string line;
    while (!finished_ && std::getline(in, line)) {
      if (line.empty()) continue;
      out << encode(handle(line)) << '\n' << std::flush;
    }
  }

 private:
  static std::string code_for(ErrorCode c) {
    switch (c) {
      case ErrorCode::io: return codes::io;
      case ErrorCode::missing_field: return codes::unsupported_field;
      case ErrorCode::invalid_argument:
      case ErrorCode::protocol:
      case ErrorCode::config: return codes::bad_request;
      default: return codes::internal;
    }
  }

  static std::int64_t salvage_id(const std::string& line) {
    try {
      const auto j = Json::parse(line);
      if (j.is_object() && j.contains("id") && j.at("id").is_number_integer()) return j.at("id").get<std::int64_t>();
    } catch (const Json::exception&) {
    }
    return 0;
  }

  Message ack(std::int64_t id, Json payload = Json::object()) const { return {Kind::ack, id, std::move(payload)}; }

  Message dispatch(const Message& req) {
    const auto& p = req.payload;
    if (req.kind == Kind::shutdown) {
      finished_ = true;
      return ack(req.id);
    }
    if (req.kind == Kind::hello) {
      if (hello_done_) return error_message(req.id, codes::protocol, "duplicate hello");
      const int v = p.value("version", 0);
      if (v != version_) {
        finished_ = true;
        return error_message(req.id, codes::version,
                             "adapter speaks version " + std::to_string(version_) + ", core sent " + std::to_string(v));
      }
      try {
        backend_.open(p.value("dataset", std::string{}), p.value("seed", std::uint64_t{0}),
                      p.value("task", std::string("classification")));
      } catch (const Error& e) {
        finished_ = true;
        return error_message(req.id, code_for(e.code()), e.what());
      }
      hello_done_ = true;
      return ack(req.id, Json{{"version", version_}, {"fields", field_names(backend_.fields())}});
    }
    if (!hello_done_) return error_message(req.id, codes::protocol, "'" + to_string(req.kind) + "' before hello");
    if (req.kind == Kind::train || req.kind == Kind::train_ssl) return train(req);
    return predict(req);
  }

  Message train(const Message& req) {
    const auto& p = req.payload;
    TrainCall call;
    const auto mode_name = p.value("mode", std::string("supervised"));
    const auto mode = parse_train_mode(mode_name);
    if (!mode) return error_message(req.id, codes::bad_mode, "unknown training mode '" + mode_name + "'");
    call.mode = *mode;
    call.labeled = parse_indices(p.at("labeled"), "labeled");
    call.ssl = req.kind == Kind::train_ssl;
    if (call.ssl && p.contains("unlabeled")) call.unlabeled = parse_indices(p.at("unlabeled"), "unlabeled");
    call.ensemble_size = p.value("ensemble_size", 5);
    call.seed = p.value("seed", std::uint64_t{0});
    call.config = p.value("config", Json::object());
    call.label_dir = p.value("label_dir", std::string{});
    const auto start = std::chrono::steady_clock::now();
    const double loss = backend_.train(call);
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    trained_ = true;
    return ack(req.id, Json{{"train_loss", loss}, {"wall_time_ms", ms}});
  }

  Message predict(const Message& req) {
    const auto& p = req.payload;
    if (!trained_) return error_message(req.id, codes::not_trained, "predict before a completed train");
    const auto indices = parse_indices(p.at("indices"), "indices");
    const auto split_name = p.value("split", std::string("train"));
    if (split_name != "train" && split_name != "test") {
      return error_message(req.id, codes::bad_request, "unknown split '" + split_name + "'");
    }
    const auto split = split_name == "train" ? SplitKind::train : SplitKind::test;
    FieldSet fields;
    bool masks = false;
    const auto available = backend_.fields();
    for (const auto& name : p.at("fields").get<std::vector<std::string>>()) {
      if (name == kMasksField && backend_.segmentation()) {
        masks = true;
        continue;
      }
      const auto f = parse_bundle_field(name);
      if (!f || !available.contains(*f)) {
        return error_message(req.id, codes::unsupported_field, "field '" + name + "' is not supported");
      }
      fields.insert(*f);
    }
    const bool b64 = p.value("encoding", std::string("decimal")) == "b64";
    Json payload = encode_bundle(backend_.predict(indices, fields, split), b64);
    if (masks) {
      Json list = Json::array();
      for (const auto& m : backend_.predict_masks(indices, split)) list.push_back(encode_mask(m));
      payload[kMasksField] = std::move(list);
    }
    return {Kind::bundle, req.id, std::move(payload)};
  }

  Backend& backend_;
  int version_;
  bool hello_done_ = false;
  bool trained_ = false;
  bool finished_ = false;
  std::int64_t last_id_ = std::numeric_limits<std::int64_t>::min();
};

}  // namespace albench::adapter
