#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qmig {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// An IPv4 or IPv6 address. IPv4 addresses occupy the first four octets of
// the storage; ordering is family first, then numeric.
class IpAddress {
 public:
  enum class Family : std::uint8_t { V4, V6 };

  IpAddress() = default;

  static IpAddress v4(std::uint32_t host_order);
  static IpAddress v6(const std::array<std::uint8_t, 16>& octets);
  static std::optional<IpAddress> try_parse(std::string_view text);
  // Throws Error(ParseError) on malformed input.
  static IpAddress parse(std::string_view text);

  Family family() const noexcept { return family_; }
  bool is_v4() const noexcept { return family_ == Family::V4; }
  unsigned bit_width() const noexcept { return is_v4() ? 32 : 128; }
  ByteView octets() const noexcept {
    return ByteView(bytes_.data(), is_v4() ? 4 : 16);
  }
  // Bit i counted from the most significant bit.
  bool bit(unsigned i) const noexcept {
    return (bytes_[i / 8] >> (7 - i % 8)) & 1u;
  }
  IpAddress masked(unsigned prefix_len) const noexcept;

  std::string to_string() const;

  friend auto operator<=>(const IpAddress&, const IpAddress&) = default;

 private:
  Family family_ = Family::V4;
  std::array<std::uint8_t, 16> bytes_{};
};

struct SocketAddr {
  IpAddress ip;
  std::uint16_t port = 0;

  std::string to_string() const;
  friend auto operator<=>(const SocketAddr&, const SocketAddr&) = default;
};

// A 4-tuple seen from one endpoint: `local` is this side, `remote` the peer.
struct PathId {
  SocketAddr local;
  SocketAddr remote;

  PathId reversed() const { return PathId{remote, local}; }
  std::string to_string() const;
  friend auto operator<=>(const PathId&, const PathId&) = default;
};

struct Prefix {
  IpAddress network;
  std::uint8_t length = 0;

  // Accepts "a.b.c.d/len" or "v6::/len"; host bits are cleared. A bare
  // address is treated as a host prefix.
  static std::optional<Prefix> try_parse(std::string_view text);
  static Prefix parse(std::string_view text);

  bool contains(const IpAddress& ip) const noexcept;
  std::string to_string() const;
  friend auto operator<=>(const Prefix&, const Prefix&) = default;
};

// Lowercase hex rendering of raw octets.
std::string to_hex(ByteView bytes);

}  // namespace qmig
