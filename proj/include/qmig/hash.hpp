#pragma once

#include <cstdint>
#include <initializer_list>

#include "qmig/net.hpp"

namespace qmig {

// Deterministic mixing used wherever simulation behaviour must not depend on
// the standard library's unspecified std::hash.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Hasher {
 public:
  explicit Hasher(std::uint64_t seed = 0) : state_(splitmix64(seed)) {}

  Hasher& add(std::uint64_t v) noexcept {
    state_ = splitmix64(state_ ^ v);
    return *this;
  }
  Hasher& add(ByteView bytes) noexcept {
    for (auto b : bytes) state_ = (state_ ^ b) * 0x100000001b3ull;
    return add(bytes.size());
  }
  Hasher& add(const SocketAddr& a) noexcept { return add(a.ip.octets()).add(a.port); }
  Hasher& add(const PathId& p) noexcept { return add(p.local).add(p.remote); }

  std::uint64_t value() const noexcept { return splitmix64(state_); }
  // Uniform in [0, 1).
  double unit() const noexcept { return static_cast<double>(value() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace qmig
