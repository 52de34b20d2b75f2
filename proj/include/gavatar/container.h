#pragma once

// Little-endian container of named, typed n-dimensional arrays.
//
// Layout:
//   8 bytes   magic
//   u32       array count
//   per array record:
//     u32       name length, then name bytes (UTF-8, no terminator)
//     u8        dtype (see DType)
//     u8        rank
//     u64[rank] dims
//     u64       payload byte offset from file start
//     u64       payload byte length
//   payloads, each aligned to 8 bytes
//
// The same container backs body-model files and trainer checkpoints.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gavatar {

enum class DType : std::uint8_t { F64 = 1, F32 = 2, I32 = 3, I64 = 4, U8 = 5 };

std::size_t dtype_size(DType dtype);

struct ArrayRecord {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<std::byte> bytes;

  std::uint64_t element_count() const;
};

class ArrayContainer {
 public:
  void put_f64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> values);
  void put_i32(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int32_t> values);
  void put_i64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int64_t> values);
  void put_string(const std::string& name, std::string_view text);

  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const ArrayRecord& record(const std::string& name) const;

  /// Typed accessors; throw FormatError on missing name or dtype mismatch.
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::int32_t> get_i32(const std::string& name) const;
  std::vector<std::int64_t> get_i64(const std::string& name) const;
  std::string get_string(const std::string& name) const;
  const std::vector<std::uint64_t>& shape(const std::string& name) const;

  const std::map<std::string, ArrayRecord>& arrays() const { return arrays_; }

  void write(const std::string& path, std::string_view magic) const;
  static ArrayContainer read(const std::string& path, std::string_view magic);

 private:
  std::map<std::string, ArrayRecord> arrays_;
};

} // namespace gavatar
