#pragma once

// Datagram layouts shared by the simulated endpoints.
//
// Long headers follow the version-independent QUIC layout (flags, version,
// length-prefixed DCID and SCID) so that the discovery probe and the Version
// Negotiation reply are what a real server would see and send. Everything
// after the header is a tagged frame encoding private to this project:
//
//   frame := type:u8 body
//   0x01 CryptoClientHello   sni_len:u16be sni alpn_len:u8 alpn
//   0x02 CryptoServerHello   disable_active_migration:u8 active_cid_limit:u8
//   0x07 NewConnectionId     seq:u32be retire_prior_to:u32be cid_len:u8 cid
//   0x08 RetireConnectionId  seq:u32be
//   0x09 PathChallenge       8 octets
//   0x0A PathResponse        8 octets
//   0x10 HttpGet             path_len:u16be path
//   0x11 HttpResponse        status:u16be hdr_len:u16be server_header
//   0x12 ConnectionClose     code:u16be
//
// A 0x00 octet is padding and is skipped by the decoder; the encoder never
// emits it except through explicit padding of Initial datagrams.

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qmig/net.hpp"

namespace qmig::wire {

inline constexpr std::uint32_t kQuicV1 = 0x00000001;
inline constexpr std::uint32_t kForcedVersion = 0x1a2a3a4a;
inline constexpr std::size_t kCidLength = 8;
inline constexpr std::size_t kMaxCidLength = 20;
inline constexpr std::size_t kMinInitialSize = 1200;
// flags + version + dcid_len + scid_len, both CIDs empty.
inline constexpr std::size_t kMinLongHeaderSize = 7;

inline constexpr std::uint8_t kLongHeaderBit = 0x80;
inline constexpr std::uint8_t kFixedBit = 0x40;

class ConnectionId {
 public:
  // Throws Error(InvalidCid) unless 1 <= size <= 20.
  explicit ConnectionId(ByteView bytes);

  template <typename Rng>
  static ConnectionId random(Rng& rng, std::size_t length = kCidLength) {
    std::array<std::uint8_t, kMaxCidLength> buf{};
    for (std::size_t i = 0; i < length; i += 8) {
      const std::uint64_t word = rng();
      for (std::size_t j = 0; j < 8 && i + j < length; ++j) {
        buf[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
      }
    }
    return ConnectionId(ByteView(buf.data(), length));
  }

  ByteView bytes() const noexcept { return ByteView(bytes_.data(), size_); }
  std::size_t size() const noexcept { return size_; }
  std::string hex() const { return to_hex(bytes()); }

  friend bool operator==(const ConnectionId& a, const ConnectionId& b) noexcept {
    return a.size_ == b.size_ && a.bytes_ == b.bytes_;
  }
  friend auto operator<=>(const ConnectionId& a, const ConnectionId& b) noexcept {
    if (auto c = a.size_ <=> b.size_; c != 0) return c;
    return a.bytes_ <=> b.bytes_;
  }

 private:
  std::array<std::uint8_t, kMaxCidLength> bytes_{};
  std::uint8_t size_ = 0;
};

using PathData = std::array<std::uint8_t, 8>;

struct TransportParams {
  bool disable_active_migration = false;
  std::uint8_t active_cid_limit = 2;

  // active_cid_limit must allow a spare CID whenever migration is allowed.
  bool valid() const noexcept { return disable_active_migration || active_cid_limit >= 2; }
  friend bool operator==(const TransportParams&, const TransportParams&) = default;
};

// `sni` empty means the extension was not sent.
struct CryptoClientHello {
  std::string sni;
  std::string alpn;
  friend bool operator==(const CryptoClientHello&, const CryptoClientHello&) = default;
};
struct CryptoServerHello {
  TransportParams transport_params;
  friend bool operator==(const CryptoServerHello&, const CryptoServerHello&) = default;
};
struct NewConnectionId {
  std::uint32_t seq = 0;
  std::uint32_t retire_prior_to = 0;
  ConnectionId cid;
  friend bool operator==(const NewConnectionId&, const NewConnectionId&) = default;
};
struct RetireConnectionId {
  std::uint32_t seq = 0;
  friend bool operator==(const RetireConnectionId&, const RetireConnectionId&) = default;
};
struct PathChallenge {
  PathData data{};
  friend bool operator==(const PathChallenge&, const PathChallenge&) = default;
};
struct PathResponse {
  PathData data{};
  friend bool operator==(const PathResponse&, const PathResponse&) = default;
};
struct HttpGet {
  std::string path;
  friend bool operator==(const HttpGet&, const HttpGet&) = default;
};
struct HttpResponse {
  std::uint16_t status = 0;
  std::string server_header;
  friend bool operator==(const HttpResponse&, const HttpResponse&) = default;
};
struct ConnectionClose {
  std::uint16_t code = 0;
  friend bool operator==(const ConnectionClose&, const ConnectionClose&) = default;
};

using Frame = std::variant<CryptoClientHello, CryptoServerHello, NewConnectionId,
                           RetireConnectionId, PathChallenge, PathResponse, HttpGet,
                           HttpResponse, ConnectionClose>;

enum class FrameType : std::uint8_t {
  Padding = 0x00,
  CryptoClientHello = 0x01,
  CryptoServerHello = 0x02,
  NewConnectionId = 0x07,
  RetireConnectionId = 0x08,
  PathChallenge = 0x09,
  PathResponse = 0x0A,
  HttpGet = 0x10,
  HttpResponse = 0x11,
  ConnectionClose = 0x12,
};

FrameType frame_type(const Frame& frame) noexcept;
// Upper-case RFC-style name, e.g. "PATH_CHALLENGE".
std::string_view frame_name(const Frame& frame) noexcept;

// Throws Error(InvalidFrame) if a frame breaks its invariants or a string
// field overflows its length prefix.
void append_frames(Bytes& out, std::span<const Frame> frames);
Bytes encode_frames(std::span<const Frame> frames);
// Throws Error(UnknownFrameType | Truncated | InvalidFrame).
std::vector<Frame> decode_frames(ByteView payload);

enum class PacketKind : std::uint8_t { Initial, VersionNegotiation };

struct LongHeader {
  PacketKind kind = PacketKind::Initial;
  std::uint32_t version = kQuicV1;
  ConnectionId dcid;
  ConnectionId scid;
  friend bool operator==(const LongHeader&, const LongHeader&) = default;
};

struct ShortHeader {
  ConnectionId dcid;
  friend bool operator==(const ShortHeader&, const ShortHeader&) = default;
};

struct ParsedLongHeader {
  LongHeader header;
  std::size_t length = 0;  // octets consumed
};

inline bool is_long_header(ByteView datagram) noexcept {
  return !datagram.empty() && (datagram[0] & kLongHeaderBit);
}

// Reserved versions have 0xa in the low nibble of every octet.
constexpr bool is_reserved_version(std::uint32_t v) noexcept {
  return (v & 0x0f0f0f0fu) == 0x0a0a0a0au;
}

void append_long_header(Bytes& out, const LongHeader& header);
ParsedLongHeader parse_long_header(ByteView datagram);

// A 1200-octet Initial carrying `forced_version`; the Client Hello is zero
// padding. A real network adapter must put a genuine Client Hello there.
Bytes encode_probe(std::uint32_t forced_version, const ConnectionId& dcid,
                   const ConnectionId& scid);

Bytes encode_version_negotiation(const ConnectionId& dcid, const ConnectionId& scid,
                                 std::span<const std::uint32_t> versions);
// Returns the advertised versions in wire order. The reply's DCID must echo
// the SCID we sent.
std::vector<std::uint32_t> parse_version_negotiation(ByteView datagram,
                                                     const ConnectionId& sent_scid);

struct Packet {
  std::variant<LongHeader, ShortHeader> header;
  std::vector<Frame> frames;

  bool is_long() const noexcept { return std::holds_alternative<LongHeader>(header); }
  const ConnectionId& dcid() const noexcept {
    return std::visit([](const auto& h) -> const ConnectionId& { return h.dcid; }, header);
  }
};

// Long-header packets are zero-padded up to `pad_to` octets.
Bytes encode_packet(const Packet& packet, std::size_t pad_to = 0);
// Version Negotiation packets decode with an empty frame list; so do
// Initials of unsupported versions, whose payload is opaque.
Packet decode_packet(ByteView datagram);

}  // namespace qmig::wire
