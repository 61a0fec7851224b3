#pragma once

#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "albench/adapter/client.hpp"
#include "albench/dataset_io.hpp"

namespace albench::adapter {

/// Golden transcript, one JSON object per line. `send` is written verbatim
/// after substituting @DATASET@; `expect` constrains the reply:
///   kind   - response kind
///   code   - error code (kind == error)
///   rows   - bundle row count; implies fields match the request
///   exit   - the adapter must terminate after this reply
inline constexpr const char* kGoldenTranscript = R"jsonl({"session":1,"send":{"id":1,"kind":"hello","payload":{"dataset":"@DATASET@","seed":7,"task":"classification","version":1}},"expect":{"kind":"ack"}}
{"session":1,"send":{"id":2,"kind":"predict","payload":{"fields":["probs"],"indices":[0,1,2],"split":"test"}},"expect":{"code":"not_trained","kind":"error"}}
{"session":1,"send":{"id":3,"kind":"train","payload":{"config":{},"labeled":[0,1,2,3,4,5,6,7,8,9],"mode":"bogus"}},"expect":{"code":"bad_mode","kind":"error"}}
{"session":1,"send":{"id":4,"kind":"train","payload":{"config":{},"labeled":[0,1,2,3,4,5,6,7,8,9],"mode":"supervised","seed":11}},"expect":{"kind":"ack"}}
{"session":1,"send":{"id":4,"kind":"predict","payload":{"fields":["probs"],"indices":[0],"split":"test"}},"expect":{"code":"protocol","kind":"error"}}
{"session":1,"send":{"id":5,"kind":"predict","payload":{"fields":["probs"],"indices":[0,1,2],"split":"test"}},"expect":{"kind":"bundle","rows":3}}
{"session":1,"send":{"id":6,"kind":"predict","payload":{"fields":["probs"],"indices":[],"split":"test"}},"expect":{"kind":"bundle","rows":0}}
{"session":1,"send":{"id":7,"kind":"predict","payload":{"fields":["disc_scores"],"indices":[0],"split":"train"}},"expect":{"code":"unsupported_field","kind":"error"}}
{"session":1,"send":{"id":8,"kind":"hello","payload":{"dataset":"@DATASET@","seed":7,"task":"classification","version":1}},"expect":{"code":"protocol","kind":"error"}}
{"session":1,"send":{"id":9,"kind":"predict","payload":{"fields":["features","probs"],"indices":[4,3,2,1,0],"split":"train"}},"expect":{"kind":"bundle","rows":5}}
{"session":1,"send":{"id":10,"kind":"train_ssl","payload":{"config":{},"labeled":[0,1,2,3,4,5],"mode":"supervised","seed":12,"unlabeled":[6,7,8,9,10,11,12,13,14,15]}},"expect":{"kind":"ack"}}
{"session":1,"send":{"id":11,"kind":"predict","payload":{"fields":["probs"],"indices":[9,10,11],"split":"test"}},"expect":{"kind":"bundle","rows":3}}
{"session":1,"send":{"id":12,"kind":"shutdown","payload":{}},"expect":{"exit":true,"kind":"ack"}}
{"session":2,"send":{"id":1,"kind":"hello","payload":{"dataset":"@DATASET@","seed":7,"task":"classification","version":99}},"expect":{"code":"version","exit":true,"kind":"error"}}
{"session":3,"send":{"id":1,"kind":"train","payload":{"config":{},"labeled":[0],"mode":"supervised"}},"expect":{"code":"protocol","kind":"error"}}
{"session":3,"send":{"id":2,"kind":"hello","payload":{"dataset":"@DATASET@","seed":7,"task":"classification","version":1}},"expect":{"kind":"ack"}}
{"session":3,"send":{"id":3,"kind":"shutdown","payload":{}},"expect":{"exit":true,"kind":"ack"}}
{"session":4,"send":{"id":1,"kind":"hello","payload":{"dataset":"@DATASET@/missing","seed":7,"task":"classification","version":1}},"expect":{"code":"io","exit":true,"kind":"error"}}
)jsonl";

struct TranscriptStep {
  int session = 0;
  std::string send;
  Json expect;
};

inline std::vector<TranscriptStep> parse_transcript(const std::string& text) {
  std::vector<TranscriptStep> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = Json::parse(line);
    out.push_back({j.at("session").get<int>(), j.at("send").dump(), j.at("expect")});
  }
  return out;
}

/// Fixed dataset the transcript refers to: 3-class blobs, 30 train / 12 test.
inline Split golden_split() {
  auto all = make_blobs(42, 3, 2, 0.8, 20240101);
  Split s;
  s.train.num_classes = s.test.num_classes = 3;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& d = i < 30 ? s.train : s.test;
    d.features.push_back(all.features[i]);
    d.labels.push_back(all.labels[i]);
  }
  return s;
}

struct ComplianceReport {
  std::vector<std::string> lines;
  int failures = 0;

  bool ok() const { return failures == 0; }
  void check(bool pass, const std::string& what) {
    lines.push_back(std::string(pass ? "PASS " : "FAIL ") + what);
    failures += pass ? 0 : 1;
  }
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

/// Reply bytes with timing fields removed.
inline std::string comparable(const std::string& reply) {
  try {
    auto j = Json::parse(reply);
    if (j.contains("payload") && j["payload"].is_object()) j["payload"].erase("wall_time_ms");
    return j.dump();
  } catch (const Json::exception&) {
    return reply;
  }
}

inline bool check_reply(const TranscriptStep& step, const Message& reply, ComplianceReport& report,
                        const std::string& where, std::optional<int> num_classes) {
  const auto sent = decode(step.send);
  bool ok = true;
  auto check = [&](bool pass, const std::string& what) {
    report.check(pass, where + ": " + what);
    ok = ok && pass;
  };
  const auto want_kind = step.expect.at("kind").get<std::string>();
  check(reply.id == sent.id, "id " + std::to_string(reply.id) + " answers request " + std::to_string(sent.id));
  check(to_string(reply.kind) == want_kind, "kind " + to_string(reply.kind) + " (expected " + want_kind + ")");
  if (step.expect.contains("code")) {
    const auto code = reply.payload.value("code", std::string{});
    check(code == step.expect.at("code").get<std::string>(), "error code '" + code + "'");
  }
  if (sent.kind == Kind::hello && reply.kind == Kind::ack) {
    check(reply.payload.value("version", 0) == kProtocolVersion, "ack carries version 1");
    const auto fields = reply.payload.value("fields", std::vector<std::string>{});
    check(std::find(fields.begin(), fields.end(), "probs") != fields.end(), "fields include probs");
  }
  if ((sent.kind == Kind::train || sent.kind == Kind::train_ssl) && reply.kind == Kind::ack) {
    check(reply.payload.contains("wall_time_ms") && reply.payload.contains("train_loss"),
          "ack carries wall_time_ms and train_loss");
  }
  if (step.expect.contains("rows") && reply.kind == Kind::bundle) {
    try {
      const auto b = decode_bundle(reply.payload, num_classes);
      const auto want_rows = step.expect.at("rows").get<std::size_t>();
      const auto indices = sent.payload.at("indices").get<std::vector<Index>>();
      check(b.rows() == want_rows && b.indices == indices, "bundle rows follow the request");
      std::set<std::string> want_fields;
      for (const auto& f : sent.payload.at("fields")) want_fields.insert(f.get<std::string>());
      std::set<std::string> got;
      for (auto f : b.fields()) got.insert(to_string(f));
      check(got == want_fields, "bundle holds exactly the requested fields");
    } catch (const Error& e) {
      check(false, std::string("bundle invalid: ") + e.what());
    }
  }
  return ok;
}

}  // namespace detail

/// Replays the golden transcript against `command`. Session 1 runs twice on
/// fresh processes; its replies must match byte for byte, timing aside.
inline ComplianceReport run_compliance(const std::string& command, const std::string& transcript = kGoldenTranscript,
                                       Timeouts timeouts = {Millis(30'000), Millis(120'000), Millis(60'000),
                                                            Millis(10'000)}) {
  ComplianceReport report;
  TempDir dir("albench-golden");
  const auto split = golden_split();
  write_dataset_dir(split, dir.path());
  const auto steps = parse_transcript(transcript);
  std::map<int, std::vector<const TranscriptStep*>> sessions;
  for (const auto& s : steps) sessions[s.session].push_back(&s);

  auto run_session = [&](const std::vector<const TranscriptStep*>& session, const std::string& label) {
    std::vector<std::string> replies;
    try {
      Session proc(command, dir.path().string(), 7, timeouts);
      for (std::size_t k = 0; k < session.size(); ++k) {
        const auto& step = *session[k];
        const auto line = detail::replace_all(step.send, "@DATASET@", dir.path().string());
        const std::string where = label + " step " + std::to_string(k + 1) + " (" + to_string(decode(line).kind) + ")";
        const auto reply = proc.exchange(line, timeouts.for_kind(decode(line).kind));
        replies.push_back(detail::comparable(proc.last_reply()));
        detail::check_reply(step, reply, report, where, split.train.num_classes);
        if (step.expect.value("exit", false)) {
          proc.process().close_stdin();
          const bool exited = proc.process().wait_for(Millis(5000));
          report.check(exited, where + ": adapter exits");
        }
      }
    } catch (const std::exception& e) {
      report.check(false, label + ": " + e.what());
    }
    return replies;
  };

  for (const auto& [id, session] : sessions) {
    const auto label = "session " + std::to_string(id);
    const auto first = run_session(session, label);
    if (id == 1) {
      const auto second = run_session(session, label + " replay");
      report.check(first == second && !first.empty(), label + ": replay yields an identical reply stream");
    }
  }
  return report;
}

}  // namespace albench::adapter
