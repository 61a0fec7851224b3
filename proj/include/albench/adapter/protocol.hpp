#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>

#include "albench/core.hpp"
#include "albench/learner.hpp"

namespace albench::adapter {

inline constexpr int kProtocolVersion = 1;

/// Request kinds sent by the core; responses are ack, bundle or error.
enum class Kind { hello, train, train_ssl, predict, shutdown, ack, bundle, error };

inline const std::vector<std::pair<Kind, std::string>>& kind_names() {
  static const std::vector<std::pair<Kind, std::string>> names = {
      {Kind::hello, "hello"},       {Kind::train, "train"}, {Kind::train_ssl, "train_ssl"},
      {Kind::predict, "predict"},   {Kind::shutdown, "shutdown"}, {Kind::ack, "ack"},
      {Kind::bundle, "bundle"},     {Kind::error, "error"},
  };
  return names;
}

inline std::string to_string(Kind k) {
  for (const auto& [kind, name] : kind_names()) {
    if (kind == k) return name;
  }
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (const auto& [kind, name] : kind_names()) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

inline bool is_request(Kind k) { return k <= Kind::shutdown; }

/// Error codes carried in error payloads.
namespace codes {
inline constexpr const char* version = "version";
inline constexpr const char* protocol = "protocol";
inline constexpr const char* bad_mode = "bad_mode";
inline constexpr const char* not_trained = "not_trained";
inline constexpr const char* unsupported_field = "unsupported_field";
inline constexpr const char* bad_request = "bad_request";
inline constexpr const char* io = "io";
inline constexpr const char* internal = "internal";
}  // namespace codes

/// Pseudo-field for segmentation predictions: arg-max label masks.
inline constexpr const char* kMasksField = "masks";

struct Message {
  Kind kind = Kind::ack;
  std::int64_t id = 0;
  Json payload = Json::object();

  friend bool operator==(const Message&, const Message&) = default;
};

/// One line, no trailing newline. Keys are sorted, so equal messages encode
/// to equal bytes.
inline std::string encode(const Message& m) {
  return Json{{"kind", to_string(m.kind)}, {"id", m.id}, {"payload", m.payload}}.dump();
}

inline Message decode(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception& e) {
    fail(ErrorCode::protocol, std::string("malformed message: ") + e.what());
  }
  require(j.is_object() && j.contains("kind") && j.contains("id"), ErrorCode::protocol,
          "message needs kind and id");
  require(j.at("kind").is_string() && j.at("id").is_number_integer(), ErrorCode::protocol,
          "kind must be a string and id an integer");
  const auto kind = parse_kind(j.at("kind").get<std::string>());
  require(kind.has_value(), ErrorCode::protocol, "unknown message kind '" + j.at("kind").get<std::string>() + "'");
  Message m{*kind, j.at("id").get<std::int64_t>(), j.value("payload", Json::object())};
  require(m.payload.is_object(), ErrorCode::protocol, "payload must be an object");
  return m;
}

inline Message error_message(std::int64_t id, const std::string& code, const std::string& text) {
  return {Kind::error, id, Json{{"code", code}, {"message", text}}};
}

// ---------------------------------------------------------------------------
// Matrices on the wire: {rows, cols, data} with row-major decimal values, or
// {rows, cols, data_b64} with little-endian f32.

static_assert(std::endian::native == std::endian::little, "data_b64 assumes a little-endian host");

inline std::string base64_encode(const void* bytes, std::size_t n) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(n), '\0');
  out.resize(b64::encode(out.data(), bytes, n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  // The decoder stops at padding; anything after it must be padding too.
  require(text.find_first_not_of('=', read) == std::string::npos, ErrorCode::protocol, "invalid base64 payload");
  out.resize(written);
  return out;
}

/// Sample indices from a JSON array of non-negative integers.
inline std::vector<Index> parse_indices(const Json& j, const std::string& name) {
  require(j.is_array(), ErrorCode::protocol, name + " must be a list");
  std::vector<Index> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    require(v.is_number_unsigned(), ErrorCode::protocol, name + " must hold non-negative integers");
    out.push_back(v.get<Index>());
  }
  return out;
}

template <class Derived>
Json encode_matrix(const Eigen::MatrixBase<Derived>& m, bool b64 = false) {
  Json j{{"rows", m.rows()}, {"cols", m.cols()}};
  using Scalar = typename Derived::Scalar;
  if (b64 && !std::is_integral_v<Scalar>) {
    std::vector<float> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(static_cast<float>(m(r, c)));
    }
    j["data_b64"] = base64_encode(flat.data(), flat.size() * sizeof(float));
    return j;
  }
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = std::move(data);
  return j;
}

inline Eigen::MatrixXd decode_matrix(const Json& j, const std::string& name) {
  require(j.is_object() && j.contains("rows") && j.contains("cols"), ErrorCode::protocol,
          name + ": matrix needs rows and cols");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  require(rows >= 0 && cols >= 0, ErrorCode::protocol, name + ": negative shape");
  Eigen::MatrixXd m(rows, cols);
  const auto n = static_cast<std::size_t>(rows * cols);
  if (j.contains("data_b64")) {
    const auto bytes = base64_decode(j.at("data_b64").get<std::string>());
    require(bytes.size() == n * sizeof(float), ErrorCode::protocol, name + ": data_b64 size does not match shape");
    for (std::size_t k = 0; k < n; ++k) {
      float v;
      std::memcpy(&v, bytes.data() + k * sizeof(float), sizeof(float));
      m(static_cast<Eigen::Index>(k) / cols, static_cast<Eigen::Index>(k) % cols) = v;
    }
    return m;
  }
  require(j.contains("data") && j.at("data").is_array(), ErrorCode::protocol, name + ": matrix needs data");
  const auto& data = j.at("data");
  require(data.size() == n, ErrorCode::protocol, name + ": data size does not match shape");
  for (std::size_t k = 0; k < n; ++k) {
    require(data[k].is_number(), ErrorCode::protocol, name + ": non-numeric entry");
    m(static_cast<Eigen::Index>(k) / cols, static_cast<Eigen::Index>(k) % cols) = data[k].get<double>();
  }
  return m;
}

inline Eigen::VectorXd decode_column(const Json& j, const std::string& name) {
  const auto m = decode_matrix(j, name);
  require(m.cols() == 1, ErrorCode::protocol, name + ": expected a single column");
  return m.col(0);
}

// ---------------------------------------------------------------------------
// Bundles

inline Json encode_raster(const Raster& r) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(r.values.data(),
                                                                                             r.height, r.width);
  return encode_matrix(m);
}

inline Raster decode_raster(const Json& j) {
  const auto m = decode_matrix(j, "entropy_maps");
  Raster r{static_cast<int>(m.cols()), static_cast<int>(m.rows()), {}};
  r.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index row = 0; row < m.rows(); ++row) {
    for (Eigen::Index col = 0; col < m.cols(); ++col) r.values.push_back(m(row, col));
  }
  return r;
}

inline Json encode_mask(const LabelMask& mask) {
  Eigen::MatrixXi m(mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) m(r, c) = mask.at(r, c);
  }
  return encode_matrix(m);
}

inline LabelMask decode_mask(const Json& j) {
  const auto m = decode_matrix(j, kMasksField);
  LabelMask out(static_cast<int>(m.cols()), static_cast<int>(m.rows()));
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      const double v = m(r, c);
      require(v >= 0 && v <= 255 && v == std::floor(v), ErrorCode::protocol, "mask labels must be integers in [0, 255]");
      out.set(r, c, static_cast<ClassId>(v));
    }
  }
  return out;
}

inline Json encode_bundle(const PredictionBundle& b, bool b64 = false) {
  Json j{{"indices", b.indices}};
  if (b.probs) j["probs"] = encode_matrix(*b.probs, b64);
  if (b.features) j["features"] = encode_matrix(*b.features, b64);
  if (b.pred_loss) j["pred_loss"] = encode_matrix(*b.pred_loss, b64);
  if (b.ensemble_votes) j["ensemble_votes"] = encode_matrix(*b.ensemble_votes);
  if (b.disc_scores) j["disc_scores"] = encode_matrix(*b.disc_scores, b64);
  if (b.entropy_maps) {
    Json maps = Json::array();
    for (const auto& r : *b.entropy_maps) maps.push_back(encode_raster(r));
    j["entropy_maps"] = std::move(maps);
  }
  return j;
}

/// Decodes and validates; only the fields present on the wire are set.
inline PredictionBundle decode_bundle(const Json& j, std::optional<int> num_classes = std::nullopt) {
  require(j.contains("indices") && j.at("indices").is_array(), ErrorCode::protocol, "bundle needs indices");
  PredictionBundle b;
  b.indices = parse_indices(j.at("indices"), "indices");
  if (j.contains("probs")) b.probs = decode_matrix(j.at("probs"), "probs");
  if (j.contains("features")) b.features = decode_matrix(j.at("features"), "features");
  if (j.contains("pred_loss")) b.pred_loss = decode_column(j.at("pred_loss"), "pred_loss");
  if (j.contains("disc_scores")) b.disc_scores = decode_column(j.at("disc_scores"), "disc_scores");
  if (j.contains("ensemble_votes")) {
    const auto m = decode_matrix(j.at("ensemble_votes"), "ensemble_votes");
    require((m.array() == m.array().floor()).all(), ErrorCode::protocol, "ensemble_votes must be integers");
    b.ensemble_votes = m.cast<int>();
  }
  if (j.contains("entropy_maps")) {
    require(j.at("entropy_maps").is_array(), ErrorCode::protocol, "entropy_maps must be a list");
    b.entropy_maps.emplace();
    for (const auto& r : j.at("entropy_maps")) b.entropy_maps->push_back(decode_raster(r));
  }
  validate_bundle(b, num_classes);
  return b;
}

inline std::vector<std::string> field_names(const FieldSet& fields) {
  std::vector<std::string> out;
  for (auto f : fields) out.push_back(to_string(f));
  return out;
}

inline std::optional<TrainMode> parse_train_mode(std::string_view s) {
  for (auto m : {TrainMode::supervised, TrainMode::ensemble, TrainMode::loss_head}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

}  // namespace albench::adapter
