#include "brave/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "brave/error.hpp"

namespace brave::io {
namespace {

constexpr char kMagic[8] = {'B', 'R', 'V', 'R', 'E', 'C', '0', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
}

template <typename T>
void put(std::ostream& os, T v) {
  T le = to_le(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated record file " + path.string());
  return to_le(v);
}

void put_name(std::ostream& os, const std::string& name) {
  put<uint32_t>(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
}

}  // namespace

void write_record(const std::filesystem::path& path, const Record& record) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put<uint32_t>(os, static_cast<uint32_t>(record.tensors.size() + record.ints.size()));
  for (const auto& [name, v] : record.ints) {
    put_name(os, name);
    put<uint8_t>(os, 1);
    put<uint32_t>(os, 0);
    put<int64_t>(os, v);
  }
  for (const auto& [name, t] : record.tensors) {
    put_name(os, name);
    put<uint8_t>(os, t.precision() == Precision::f32 ? 0 : 2);
    put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) put<uint64_t>(os, static_cast<uint64_t>(d));
    if (t.precision() == Precision::f32) {
      for (float f : t.data<float>()) put<uint32_t>(os, std::bit_cast<uint32_t>(f));
    } else {
      for (double d : t.data<double>()) put<uint64_t>(os, std::bit_cast<uint64_t>(d));
    }
  }
  if (!os) throw IoError("write failure on " + path.string());
}

Record read_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a record file (bad magic)");
  }
  uint32_t version = get<uint32_t>(is, path);
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported record version " + std::to_string(version));
  }
  uint32_t count = get<uint32_t>(is, path);
  Record record;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get<uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("truncated record file " + path.string());
    uint8_t dtype = get<uint8_t>(is, path);
    uint32_t rank = get<uint32_t>(is, path);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(get<uint64_t>(is, path));
    if (dtype == 1) {
      if (rank != 0) throw IoError(path.string() + ": i64 entries must be scalar");
      record.ints[name] = get<int64_t>(is, path);
    } else if (dtype == 0) {
      Tensor t(shape, Precision::f32);
      auto span = t.data<float>();
      for (auto& f : span) f = std::bit_cast<float>(get<uint32_t>(is, path));
      record.tensors[name] = std::move(t);
    } else if (dtype == 2) {
      Tensor t(shape, Precision::f64);
      auto span = t.data<double>();
      for (auto& d : span) d = std::bit_cast<double>(get<uint64_t>(is, path));
      record.tensors[name] = std::move(t);
    } else {
      throw IoError(path.string() + ": unknown dtype " + std::to_string(dtype));
    }
  }
  return record;
}

}  // namespace brave::io
