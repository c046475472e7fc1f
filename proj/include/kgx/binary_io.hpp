#pragma once
// Little-endian primitive encoding for the model and evaluator files.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kgx/error.hpp"

namespace kgx::io {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T)))
    throw Error(ErrorCode::parse_error, "unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void write_doubles(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) write_le(out, x);
}

inline void read_doubles(std::istream& in, std::span<double> xs) {
  for (double& x : xs) x = read_le<double>(in);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  auto n = read_le<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n))
    throw Error(ErrorCode::parse_error, "truncated string");
  return s;
}

}  // namespace kgx::io
