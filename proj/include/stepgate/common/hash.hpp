#pragma once

#include <cstdint>
#include <string_view>

namespace stepgate {

// 64-bit structural hasher. Strings are length-prefixed so that field
// boundaries cannot alias ("ab","c" vs "a","bc").
class Hasher {
 public:
  Hasher& add(std::string_view s) noexcept {
    add(static_cast<std::uint64_t>(s.size()));
    for (unsigned char c : s) byte(c);
    return *this;
  }

  Hasher& add(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>(v >> (8 * i)));
    return *this;
  }

  Hasher& add(std::int64_t v) noexcept { return add(static_cast<std::uint64_t>(v)); }
  Hasher& add(int v) noexcept { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  Hasher& add(bool v) noexcept { return add(static_cast<std::uint64_t>(v ? 1 : 0)); }

  // Final avalanche so that nearby inputs spread over all 64 bits.
  std::uint64_t digest() const noexcept { return mix64(state_); }

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  void byte(unsigned char c) noexcept {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }

  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return Hasher::mix64(a ^ (Hasher::mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

}  // namespace stepgate
