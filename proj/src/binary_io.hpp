#pragma once

// Little-endian scalar I/O shared by the feature and checkpoint formats.

#include "gcahng/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace gcahng::detail {

template <class T>
using LeBits = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>, std::uint32_t, T>>;

template <class T>
inline T read_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw ParseError(std::string("truncated binary file while reading ") + what);
  LeBits<T> bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<LeBits<T>>(buf[k]) << (8 * k);
  if constexpr (std::is_floating_point_v<T>) {
    return std::bit_cast<T>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

template <class T>
inline void write_le(std::ostream& out, T value) {
  LeBits<T> bits;
  if constexpr (std::is_floating_point_v<T>) {
    bits = std::bit_cast<std::uint32_t>(value);
  } else {
    bits = static_cast<LeBits<T>>(value);
  }
  for (std::size_t k = 0; k < sizeof(T); ++k) out.put(static_cast<char>((bits >> (8 * k)) & 0xff));
}

}  // namespace gcahng::detail
