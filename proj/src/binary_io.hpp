#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "monet/error.hpp"

namespace monet::detail {

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  return byteswap_if_big(v);
}

inline std::uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

inline void write_be_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

/// Reads `count` bytes in bounded chunks so a corrupt length field cannot force a huge allocation.
inline std::vector<unsigned char> read_bytes(std::istream& in, std::uint64_t count, const char* what) {
  constexpr std::uint64_t kChunk = 1u << 20;
  std::vector<unsigned char> buf;
  while (buf.size() < count) {
    const std::uint64_t n = std::min<std::uint64_t>(kChunk, count - buf.size());
    const std::size_t at = buf.size();
    buf.resize(at + n);
    if (!in.read(reinterpret_cast<char*>(buf.data() + at), static_cast<std::streamsize>(n))) {
      throw FormatError(std::string("truncated input while reading ") + what);
    }
  }
  return buf;
}

}  // namespace monet::detail
