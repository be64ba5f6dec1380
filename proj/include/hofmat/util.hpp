#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace hofmat {

/// 64-bit FNV-1a over raw bytes; used for config hashes and cache keys.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void add(std::string_view s) {
    add(static_cast<std::int64_t>(s.size()));
    add_bytes(s.data(), s.size());
  }
  void add(double v) {
    if (v == 0.0) v = 0.0;  // fold -0.0
    add(std::bit_cast<std::uint64_t>(v));
  }
  void add(std::int64_t v) { add(static_cast<std::uint64_t>(v)); }
  void add(std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    add_bytes(bytes, 8);
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Shortest decimal string that round-trips to the same binary64.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace hofmat
