#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "lig/common.hpp"

// Little-endian primitives for the binary container formats.

namespace lig::bin {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_i32(std::ostream& os, std::int32_t v) { put_u32(os, static_cast<std::uint32_t>(v)); }
inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

/// Reader that throws FormatError on truncation.
class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError(what_ + ": truncated file");
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(reinterpret_cast<char*>(b.data()), 4);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint8_t u8() {
    char c = 0;
    bytes(&c, 1);
    return static_cast<std::uint8_t>(c);
  }

  void expect_magic(std::string_view magic) {
    std::array<char, 4> m{};
    bytes(m.data(), 4);
    if (std::string_view(m.data(), 4) != magic)
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic) + "\"");
  }

  const std::string& what() const { return what_; }

 private:
  std::istream& is_;
  std::string what_;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return is;
}

inline void finish(std::ostream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace lig::bin
