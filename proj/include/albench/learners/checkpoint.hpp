#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "albench/learners/network.hpp"

namespace albench {

// Binary checkpoint container, little-endian throughout:
//   "ALBM" | u32 version | u32 flags (bit 0: loss head) | u32 tensor count
//   | per tensor: u32 rank, u32 dims[rank] | f32 payload in tensor order.
// Tensor order: (W_l [out, in], b_l [out]) for every layer, then the loss
// head (w [features], b [1]) when flagged.

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kCheckpointLossHeadFlag = 1u;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  require(static_cast<bool>(is), ErrorCode::io, "truncated checkpoint");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const Network& net, std::ostream& os) {
  const auto& spec = net.spec();
  std::vector<std::vector<std::uint32_t>> shapes;
  for (auto [out, in] : spec.layer_shapes()) {
    shapes.push_back({static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in)});
    shapes.push_back({static_cast<std::uint32_t>(out)});
  }
  if (spec.loss_head) {
    shapes.push_back({static_cast<std::uint32_t>(spec.feature_dim())});
    shapes.push_back({1u});
  }
  os.write("ALBM", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, spec.loss_head ? kCheckpointLossHeadFlag : 0u);
  detail::put_u32(os, static_cast<std::uint32_t>(shapes.size()));
  for (const auto& s : shapes) {
    detail::put_u32(os, static_cast<std::uint32_t>(s.size()));
    for (auto d : s) detail::put_u32(os, d);
  }
  for (double v : net.parameters()) detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  require(static_cast<bool>(os), ErrorCode::io, "failed to write checkpoint");
}

inline Network load_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::string(magic, 4) == "ALBM", ErrorCode::io, "not an ALBM checkpoint");
  const auto version = detail::get_u32(is);
  require(version == kCheckpointVersion, ErrorCode::io, "unsupported checkpoint version " + std::to_string(version));
  const bool head = (detail::get_u32(is) & kCheckpointLossHeadFlag) != 0;
  const auto count = detail::get_u32(is);
  require(count >= 2 && count % 2 == 0 && count < 1024, ErrorCode::io, "malformed checkpoint tensor table");
  std::vector<std::vector<std::uint32_t>> shapes(count);
  for (auto& s : shapes) {
    const auto rank = detail::get_u32(is);
    require(rank >= 1 && rank <= 2, ErrorCode::io, "malformed tensor rank");
    s.resize(rank);
    for (auto& d : s) d = detail::get_u32(is);
  }
  const std::size_t layers = (count - (head ? 2u : 0u)) / 2;
  require(layers >= 1, ErrorCode::io, "checkpoint holds no layers");
  NetworkSpec spec;
  spec.loss_head = head;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = shapes[2 * l];
    const auto& b = shapes[2 * l + 1];
    require(w.size() == 2 && b.size() == 1 && b[0] == w[0], ErrorCode::io, "inconsistent layer shapes");
    if (l == 0) spec.input_dim = static_cast<int>(w[1]);
    if (l + 1 < layers) spec.hidden.push_back(static_cast<int>(w[0]));
    else spec.num_classes = static_cast<int>(w[0]);
  }
  Network net(spec);
  if (head) {
    require(shapes[count - 2].size() == 1 && static_cast<int>(shapes[count - 2][0]) == spec.feature_dim(),
            ErrorCode::io, "inconsistent loss-head shape");
  }
  for (double& v : net.parameters()) v = std::bit_cast<float>(detail::get_u32(is));
  return net;
}

inline void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::io, "cannot open " + path);
  save_checkpoint(net, os);
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::io, "cannot open " + path);
  return load_checkpoint(is);
}

}  // namespace albench
