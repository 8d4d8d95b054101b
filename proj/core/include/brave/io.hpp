#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "brave/tensor.hpp"

namespace brave::io {

// Binary record: a named collection of tensors and integer scalars.
//
//   magic   "BRVREC01"
//   u32     version (currently 1)
//   u32     entry count
//   entry:  u32 name length, name bytes,
//           u8 dtype (0 = f32, 1 = i64 scalar, 2 = f64),
//           u32 rank, u64 dims[rank],
//           payload (little-endian)
//
// Dataset exports and flow caches store f32 payloads; checkpoints reuse the
// same container with the run's precision.
struct Record {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, int64_t> ints;
};

void write_record(const std::filesystem::path& path, const Record& record);
Record read_record(const std::filesystem::path& path);

}  // namespace brave::io
