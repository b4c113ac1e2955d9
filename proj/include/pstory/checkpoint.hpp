#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pstory/params.hpp"
#include "pstory/tensor.hpp"

namespace pstory {

inline constexpr std::string_view kCheckpointMagic = "PSTORY1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and doubles little-endian:
//   magic "PSTORY1" | u32 version | u64 metadata length | metadata bytes
//   | u64 entry count | entries...
// entry: u32 name length | name | u32 rank | u64 dims[rank] | f64 values[]
// Metadata is free-form text (JSON by convention); empty for plain tensor sets.
struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> entries;

  void add(std::string name, Tensor value) { entries.emplace_back(std::move(name), std::move(value)); }
  // Appends every parameter as "<prefix><name>".
  void add_params(const ParamStore& params, std::string_view prefix);
  const Tensor* find(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  // Copies "<prefix><name>" entries into the matching parameters of `params`.
  // Every parameter must be present with the same shape.
  void load_params(ParamStore& params, std::string_view prefix) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace pstory
