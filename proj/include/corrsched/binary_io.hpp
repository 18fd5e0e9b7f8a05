#pragma once

// Little-endian primitives for the checkpoint and frame-cache formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "corrsched/error.hpp"

namespace corrsched::binio {

template <typename UInt>
void put_uint(std::ostream& out, UInt value) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_uint(std::istream& in) {
  unsigned char bytes[sizeof(UInt)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(UInt));
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated binary stream");
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

inline void put_f64(std::ostream& out, double value) { put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value)); }

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_uint<std::uint64_t>(in)); }

inline void put_i64(std::ostream& out, std::int64_t value) { put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(value)); }

inline std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_uint<std::uint64_t>(in)); }

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char got[4];
  in.read(got, 4);
  require(static_cast<bool>(in) && std::memcmp(got, magic, 4) == 0, ErrorKind::kSchema, "not a " + what + " file");
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get_uint<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated binary stream");
  return s;
}

}  // namespace corrsched::binio
