#pragma once

// Little-endian binary helpers shared by the checkpoint and delta formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "gramgan/errors.hpp"
#include "gramgan/tensor.hpp"

namespace gramgan::detail {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void record(const std::string& name, const std::vector<int>& shape, std::span<const Real> data) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) u32(static_cast<std::uint32_t>(d));
    for (Real v : data) {
      const float f = static_cast<float>(v);
      bytes(&f, 4);
    }
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

struct Record {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> data;
};

class Reader {
 public:
  Reader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n, const std::string& field) {
    if (n > data_.size() - pos_)
      throw CheckpointError(what_ + " is truncated or corrupt: unexpected end of file while reading " + field);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const std::string& field) {
    std::uint32_t v;
    bytes(&v, 4, field);
    return v;
  }
  std::uint64_t u64(const std::string& field) {
    std::uint64_t v;
    bytes(&v, 8, field);
    return v;
  }
  std::string str(const std::string& field, std::size_t limit = 1 << 24) {
    const std::uint32_t n = u32(field);
    if (n > limit) throw CheckpointError(what_ + " is corrupt: implausible length in " + field);
    std::string s(n, '\0');
    bytes(s.data(), n, field);
    return s;
  }
  Record record() {
    Record r;
    r.name = str("record name", 4096);
    const std::string field = "record \"" + r.name + "\"";
    const std::uint32_t ndim = u32(field);
    if (ndim > 8) throw CheckpointError(what_ + " is corrupt: bad rank in " + field);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      r.shape.push_back(static_cast<int>(u32(field)));
      count *= static_cast<std::uint64_t>(r.shape.back());
    }
    if (count * 4 > data_.size() - pos_)
      throw CheckpointError(what_ + " is truncated or corrupt: unexpected end of file while reading " + field);
    r.data.resize(count);
    for (auto& v : r.data) {
      float f;
      bytes(&f, 4, field);
      v = static_cast<Real>(f);
    }
    return r;
  }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& what() const { return what_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_file(const std::string& path, const std::string& what);
void write_file(const std::string& path, const std::string& bytes, const std::string& what);

}  // namespace gramgan::detail
