#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "raft/numerics/parameters.hpp"

namespace raft::numerics {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

// Named float32 parameters plus a JSON config document.
//
// On-disk layout (all integers little-endian):
//   "RAFT"                       4 bytes magic
//   version                      u16
//   config length, config bytes  u32 + UTF-8
//   repeated until end of file:
//     name length, name bytes    u32 + UTF-8
//     rank, dims                 u32 + rank * u32
//     values                     product(dims) * IEEE-754 binary32
struct ModelCheckpoint {
  std::uint16_t version = kCheckpointVersion;
  std::string config;
  std::vector<NamedTensor> params;

  bool operator==(const ModelCheckpoint&) const = default;

  const NamedTensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static ModelCheckpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static ModelCheckpoint load(const std::filesystem::path& path);

  // Parameters sorted by name.
  template <typename T>
  static std::vector<NamedTensor> from_parameters(const ParameterSet<T>& set, const std::string& prefix = "") {
    std::vector<NamedTensor> out;
    for (const auto& [name, p] : set) {
      out.push_back({prefix + name, p.value.shape, std::vector<float>(p.value.data.begin(), p.value.data.end())});
    }
    return out;
  }

  // Parameters whose name starts with `prefix`, with the prefix stripped.
  template <typename T>
  ParameterSet<T> to_parameters(const std::string& prefix = "") const {
    ParameterSet<T> set;
    for (const auto& p : params) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      set.add(p.name.substr(prefix.size()), Tensor<T>(p.shape, std::vector<T>(p.values.begin(), p.values.end())));
    }
    return set;
  }
};

// FNV-1a over the serialized bytes; recorded for provenance.
std::string checkpoint_hash(const ModelCheckpoint& ckpt);

}  // namespace raft::numerics
