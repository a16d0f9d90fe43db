/* Copyright 2026 The GUDA Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "guda/denoiser.hpp"

// Checkpoint layout, all integers little-endian:
//   "GUDA" | u32 version | u32 json_len | arch json (UTF-8) | u64 count | count x f32

namespace guda {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

namespace detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[pos + i]) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace detail

/// Weights are stored as 32-bit floats; this rounds in memory the same way so
/// a loaded checkpoint equals the params it was saved from.
inline DenoiserParams quantize_to_f32(DenoiserParams p) {
  for (auto& w : p.weights) w = static_cast<double>(static_cast<float>(w));
  return p;
}

inline std::vector<std::uint8_t> encode_checkpoint(const DenoiserParams& p) {
  std::vector<std::uint8_t> out{'G', 'U', 'D', 'A'};
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string arch = nlohmann::json(p.arch).dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.size()));
  out.insert(out.end(), arch.begin(), arch.end());
  detail::put_le<std::uint64_t>(out, p.weights.size());
  for (double w : p.weights) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
  return out;
}

inline DenoiserParams decode_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < 4 || in[0] != 'G' || in[1] != 'U' || in[2] != 'D' || in[3] != 'A')
    throw CheckpointError("bad checkpoint magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = detail::get_le<std::uint32_t>(in, pos);
  if (pos + len > in.size()) throw CheckpointError("checkpoint truncated");
  DenoiserParams p;
  try {
    p.arch = nlohmann::json::parse(in.begin() + pos, in.begin() + pos + len).get<Architecture>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad architecture descriptor: ") + e.what());
  }
  p.arch.validate();
  pos += len;
  const auto count = detail::get_le<std::uint64_t>(in, pos);
  if (count != p.arch.param_count())
    throw CheckpointError("parameter count " + std::to_string(count) +
                          " does not match architecture (" +
                          std::to_string(p.arch.param_count()) + ")");
  if (in.size() - pos != count * 4) throw CheckpointError("parameter payload size mismatch");
  p.weights.resize(count);
  for (auto& w : p.weights) w = std::bit_cast<float>(detail::get_le<std::uint32_t>(in, pos));
  if (!all_finite(p.weights)) throw CheckpointError("non-finite weight in checkpoint");
  return p;
}

inline void save_checkpoint(const DenoiserParams& p, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(p);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline DenoiserParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace guda
