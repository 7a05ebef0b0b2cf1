#pragma once

// Little-endian binary readers/writers shared by the persisted file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "mgd/error.hpp"

namespace mgd::binio {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename T>
  void put(T v) {
    v = to_little(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <typename T>
  void put_span(std::span<const T> vs) {
    if constexpr (std::endian::native == std::endian::little) {
      os_.write(reinterpret_cast<const char*>(vs.data()),
                static_cast<std::streamsize>(vs.size_bytes()));
    } else {
      for (const T& v : vs) put(v);
    }
  }

  void put_magic(std::string_view magic) { os_.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

  void check() const { require(static_cast<bool>(os_), ErrorCode::kIo, "write failed"); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(is_), ErrorCode::kFormat, what_ + ": truncated file");
    return to_little(v);
  }

  template <typename T>
  void get_span(std::span<T> out) {
    if constexpr (std::endian::native == std::endian::little) {
      is_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
      require(static_cast<bool>(is_), ErrorCode::kFormat, what_ + ": truncated file");
    } else {
      for (T& v : out) v = get<T>();
    }
  }

  void expect_magic(std::string_view magic) {
    std::string buf(magic.size(), '\0');
    is_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(static_cast<bool>(is_) && buf == magic, ErrorCode::kFormat,
            what_ + ": bad magic, expected " + std::string(magic));
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace mgd::binio
