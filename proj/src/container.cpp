#include "gavatar/container.h"

#include "gavatar/common.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

namespace gavatar {

namespace {

constexpr std::size_t kMagicSize = 8;

template <typename T>
void append_pod(std::vector<std::byte>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::byte>& data) : data_(data) {}

  template <typename T>
  T read() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string read_string(std::size_t n) {
    require(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void require(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw FormatError("container truncated while reading header");
    }
  }

  const std::vector<std::byte>& data_;
  std::size_t pos_ = 0;
};

std::string fixed_magic(std::string_view magic) {
  std::string m(magic.substr(0, kMagicSize));
  m.resize(kMagicSize, '\0');
  return m;
}

template <typename T>
void put_typed(std::map<std::string, ArrayRecord>& arrays, const std::string& name, DType dtype,
               std::vector<std::uint64_t> shape, std::span<const T> values) {
  ArrayRecord rec;
  rec.dtype = dtype;
  rec.shape = std::move(shape);
  if (rec.element_count() != values.size()) {
    throw ShapeError("array '" + name + "': shape does not match value count");
  }
  rec.bytes.resize(values.size_bytes());
  if (!values.empty()) {
    std::memcpy(rec.bytes.data(), values.data(), values.size_bytes());
  }
  arrays[name] = std::move(rec);
}

template <typename T>
std::vector<T> get_typed(const ArrayRecord& rec, DType expected, const std::string& name) {
  if (rec.dtype != expected) {
    throw FormatError("array '" + name + "' has unexpected dtype");
  }
  std::vector<T> out(rec.bytes.size() / sizeof(T));
  if (!out.empty()) {
    std::memcpy(out.data(), rec.bytes.data(), rec.bytes.size());
  }
  return out;
}

} // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F64:
    case DType::I64:
      return 8;
    case DType::F32:
    case DType::I32:
      return 4;
    case DType::U8:
      return 1;
  }
  throw FormatError("unknown dtype code");
}

std::uint64_t ArrayRecord::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

void ArrayContainer::put_f64(const std::string& name, std::vector<std::uint64_t> shape,
                             std::span<const double> values) {
  put_typed(arrays_, name, DType::F64, std::move(shape), values);
}

void ArrayContainer::put_i32(const std::string& name, std::vector<std::uint64_t> shape,
                             std::span<const std::int32_t> values) {
  put_typed(arrays_, name, DType::I32, std::move(shape), values);
}

void ArrayContainer::put_i64(const std::string& name, std::vector<std::uint64_t> shape,
                             std::span<const std::int64_t> values) {
  put_typed(arrays_, name, DType::I64, std::move(shape), values);
}

void ArrayContainer::put_string(const std::string& name, std::string_view text) {
  ArrayRecord rec;
  rec.dtype = DType::U8;
  rec.shape = {text.size()};
  rec.bytes.resize(text.size());
  if (!text.empty()) {
    std::memcpy(rec.bytes.data(), text.data(), text.size());
  }
  arrays_[name] = std::move(rec);
}

const ArrayRecord& ArrayContainer::record(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) {
    throw FormatError("container has no array named '" + name + "'");
  }
  return it->second;
}

std::vector<double> ArrayContainer::get_f64(const std::string& name) const {
  return get_typed<double>(record(name), DType::F64, name);
}

std::vector<std::int32_t> ArrayContainer::get_i32(const std::string& name) const {
  return get_typed<std::int32_t>(record(name), DType::I32, name);
}

std::vector<std::int64_t> ArrayContainer::get_i64(const std::string& name) const {
  return get_typed<std::int64_t>(record(name), DType::I64, name);
}

std::string ArrayContainer::get_string(const std::string& name) const {
  const auto& rec = record(name);
  if (rec.dtype != DType::U8) {
    throw FormatError("array '" + name + "' is not a byte string");
  }
  return std::string(reinterpret_cast<const char*>(rec.bytes.data()), rec.bytes.size());
}

const std::vector<std::uint64_t>& ArrayContainer::shape(const std::string& name) const {
  return record(name).shape;
}

void ArrayContainer::write(const std::string& path, std::string_view magic) const {
  // Header size first, so payload offsets can be absolute.
  std::size_t header = kMagicSize + sizeof(std::uint32_t);
  for (const auto& [name, rec] : arrays_) {
    header += sizeof(std::uint32_t) + name.size() + 2 + 8 * rec.shape.size() + 16;
  }
  auto align8 = [](std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; };

  std::vector<std::byte> out;
  const std::string m = fixed_magic(magic);
  out.insert(out.end(), reinterpret_cast<const std::byte*>(m.data()),
             reinterpret_cast<const std::byte*>(m.data()) + kMagicSize);
  append_pod(out, static_cast<std::uint32_t>(arrays_.size()));

  std::uint64_t offset = align8(header);
  for (const auto& [name, rec] : arrays_) {
    append_pod(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), reinterpret_cast<const std::byte*>(name.data()),
               reinterpret_cast<const std::byte*>(name.data()) + name.size());
    append_pod(out, static_cast<std::uint8_t>(rec.dtype));
    append_pod(out, static_cast<std::uint8_t>(rec.shape.size()));
    for (auto d : rec.shape) {
      append_pod(out, d);
    }
    append_pod(out, offset);
    append_pod(out, static_cast<std::uint64_t>(rec.bytes.size()));
    offset = align8(offset + rec.bytes.size());
  }
  for (const auto& [name, rec] : arrays_) {
    out.resize(align8(out.size()), std::byte{0});
    out.insert(out.end(), rec.bytes.begin(), rec.bytes.end());
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) {
    throw std::runtime_error("failed writing '" + path + "'");
  }
}

ArrayContainer ArrayContainer::read(const std::string& path, std::string_view magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::byte> data(raw.size());
  if (!raw.empty()) {
    std::memcpy(data.data(), raw.data(), raw.size());
  }

  Reader r(data);
  if (r.read_string(kMagicSize) != fixed_magic(magic)) {
    throw FormatError("'" + path + "': bad magic");
  }
  const auto count = r.read<std::uint32_t>();
  ArrayContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.read<std::uint32_t>();
    if (name_len > 4096) {
      throw FormatError("'" + path + "': implausible array name length");
    }
    std::string name = r.read_string(name_len);
    ArrayRecord rec;
    rec.dtype = static_cast<DType>(r.read<std::uint8_t>());
    const std::size_t elem = dtype_size(rec.dtype);
    const auto rank = r.read<std::uint8_t>();
    for (int d = 0; d < rank; ++d) {
      rec.shape.push_back(r.read<std::uint64_t>());
    }
    const auto offset = r.read<std::uint64_t>();
    const auto nbytes = r.read<std::uint64_t>();
    if (nbytes != rec.element_count() * elem) {
      throw FormatError("'" + path + "': array '" + name + "' byte length disagrees with its shape");
    }
    if (offset > data.size() || nbytes > data.size() - offset) {
      throw FormatError("'" + path + "': array '" + name + "' payload is truncated");
    }
    rec.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(offset),
                     data.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
    c.arrays_[name] = std::move(rec);
  }
  return c;
}

} // namespace gavatar
