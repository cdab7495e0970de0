#include "qmig/wire.hpp"

#include <algorithm>
#include <limits>

#include "qmig/error.hpp"

namespace qmig::wire {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }
void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}
void put_bytes(Bytes& out, ByteView b) { out.insert(out.end(), b.begin(), b.end()); }

template <typename Len>
void put_string(Bytes& out, std::string_view s, std::string_view field) {
  if (s.size() > std::numeric_limits<Len>::max()) {
    throw Error(ErrorCode::InvalidFrame, std::string(field) + " too long");
  }
  if constexpr (sizeof(Len) == 1) {
    put_u8(out, static_cast<std::uint8_t>(s.size()));
  } else {
    put_u16(out, static_cast<std::uint16_t>(s.size()));
  }
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  bool done() const noexcept { return pos_ >= data_.size(); }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  ByteView take(std::size_t n) {
    if (remaining() < n) throw Error(ErrorCode::Truncated, "need " + std::to_string(n) + " octets");
    ByteView out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    auto b = take(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           b[3];
  }
  std::string str(std::size_t n) {
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  PathData path_data() {
    auto b = take(8);
    PathData d{};
    std::copy(b.begin(), b.end(), d.begin());
    return d;
  }
  std::uint8_t peek() const { return data_[pos_]; }
  void skip() { ++pos_; }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

void validate(const Frame& frame) {
  if (const auto* ncid = std::get_if<NewConnectionId>(&frame)) {
    if (ncid->retire_prior_to > ncid->seq) {
      throw Error(ErrorCode::InvalidFrame, "NEW_CONNECTION_ID retire_prior_to exceeds seq");
    }
  }
}

Frame decode_one(FrameType type, Reader& r) {
  switch (type) {
    case FrameType::CryptoClientHello: {
      CryptoClientHello ch;
      ch.sni = r.str(r.u16());
      ch.alpn = r.str(r.u8());
      return ch;
    }
    case FrameType::CryptoServerHello: {
      CryptoServerHello sh;
      sh.transport_params.disable_active_migration = r.u8() != 0;
      sh.transport_params.active_cid_limit = r.u8();
      return sh;
    }
    case FrameType::NewConnectionId: {
      const auto seq = r.u32();
      const auto retire_prior_to = r.u32();
      const auto len = r.u8();
      NewConnectionId f{seq, retire_prior_to, ConnectionId(r.take(len))};
      validate(f);
      return f;
    }
    case FrameType::RetireConnectionId:
      return RetireConnectionId{r.u32()};
    case FrameType::PathChallenge:
      return PathChallenge{r.path_data()};
    case FrameType::PathResponse:
      return PathResponse{r.path_data()};
    case FrameType::HttpGet:
      return HttpGet{r.str(r.u16())};
    case FrameType::HttpResponse: {
      HttpResponse resp;
      resp.status = r.u16();
      resp.server_header = r.str(r.u16());
      return resp;
    }
    case FrameType::ConnectionClose:
      return ConnectionClose{r.u16()};
    case FrameType::Padding:
      break;
  }
  throw Error(ErrorCode::UnknownFrameType, "padding has no body");
}

bool known_type(std::uint8_t t) {
  switch (static_cast<FrameType>(t)) {
    case FrameType::CryptoClientHello:
    case FrameType::CryptoServerHello:
    case FrameType::NewConnectionId:
    case FrameType::RetireConnectionId:
    case FrameType::PathChallenge:
    case FrameType::PathResponse:
    case FrameType::HttpGet:
    case FrameType::HttpResponse:
    case FrameType::ConnectionClose:
      return true;
    default:
      return false;
  }
}

ConnectionId read_cid(Reader& r) {
  const auto len = r.u8();
  if (len == 0 || len > kMaxCidLength) {
    throw Error(ErrorCode::InvalidCid, "connection id length " + std::to_string(len));
  }
  return ConnectionId(r.take(len));
}

}  // namespace

ConnectionId::ConnectionId(ByteView bytes) {
  if (bytes.empty() || bytes.size() > kMaxCidLength) {
    throw Error(ErrorCode::InvalidCid, "length " + std::to_string(bytes.size()));
  }
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
  size_ = static_cast<std::uint8_t>(bytes.size());
}

FrameType frame_type(const Frame& frame) noexcept {
  return std::visit(
      Overloaded{
          [](const CryptoClientHello&) { return FrameType::CryptoClientHello; },
          [](const CryptoServerHello&) { return FrameType::CryptoServerHello; },
          [](const NewConnectionId&) { return FrameType::NewConnectionId; },
          [](const RetireConnectionId&) { return FrameType::RetireConnectionId; },
          [](const PathChallenge&) { return FrameType::PathChallenge; },
          [](const PathResponse&) { return FrameType::PathResponse; },
          [](const HttpGet&) { return FrameType::HttpGet; },
          [](const HttpResponse&) { return FrameType::HttpResponse; },
          [](const ConnectionClose&) { return FrameType::ConnectionClose; },
      },
      frame);
}

std::string_view frame_name(const Frame& frame) noexcept {
  switch (frame_type(frame)) {
    case FrameType::CryptoClientHello: return "CRYPTO_CH";
    case FrameType::CryptoServerHello: return "CRYPTO_SH";
    case FrameType::NewConnectionId: return "NEW_CONNECTION_ID";
    case FrameType::RetireConnectionId: return "RETIRE_CONNECTION_ID";
    case FrameType::PathChallenge: return "PATH_CHALLENGE";
    case FrameType::PathResponse: return "PATH_RESPONSE";
    case FrameType::HttpGet: return "HTTP_GET";
    case FrameType::HttpResponse: return "HTTP_RESPONSE";
    case FrameType::ConnectionClose: return "CONNECTION_CLOSE";
    case FrameType::Padding: break;
  }
  return "PADDING";
}

void append_frames(Bytes& out, std::span<const Frame> frames) {
  for (const auto& frame : frames) {
    validate(frame);
    put_u8(out, static_cast<std::uint8_t>(frame_type(frame)));
    std::visit(Overloaded{
                   [&](const CryptoClientHello& f) {
                     put_string<std::uint16_t>(out, f.sni, "sni");
                     put_string<std::uint8_t>(out, f.alpn, "alpn");
                   },
                   [&](const CryptoServerHello& f) {
                     put_u8(out, f.transport_params.disable_active_migration ? 1 : 0);
                     put_u8(out, f.transport_params.active_cid_limit);
                   },
                   [&](const NewConnectionId& f) {
                     put_u32(out, f.seq);
                     put_u32(out, f.retire_prior_to);
                     put_u8(out, static_cast<std::uint8_t>(f.cid.size()));
                     put_bytes(out, f.cid.bytes());
                   },
                   [&](const RetireConnectionId& f) { put_u32(out, f.seq); },
                   [&](const PathChallenge& f) { put_bytes(out, f.data); },
                   [&](const PathResponse& f) { put_bytes(out, f.data); },
                   [&](const HttpGet& f) { put_string<std::uint16_t>(out, f.path, "path"); },
                   [&](const HttpResponse& f) {
                     put_u16(out, f.status);
                     put_string<std::uint16_t>(out, f.server_header, "server_header");
                   },
                   [&](const ConnectionClose& f) { put_u16(out, f.code); },
               },
               frame);
  }
}

Bytes encode_frames(std::span<const Frame> frames) {
  Bytes out;
  append_frames(out, frames);
  return out;
}

std::vector<Frame> decode_frames(ByteView payload) {
  std::vector<Frame> frames;
  Reader r(payload);
  while (!r.done()) {
    const auto type = r.peek();
    if (type == static_cast<std::uint8_t>(FrameType::Padding)) {
      r.skip();
      continue;
    }
    if (!known_type(type)) {
      throw Error(ErrorCode::UnknownFrameType,
                  "type 0x" + to_hex(ByteView(&type, 1)) + " at offset " + std::to_string(r.pos()));
    }
    r.skip();
    frames.push_back(decode_one(static_cast<FrameType>(type), r));
  }
  return frames;
}

void append_long_header(Bytes& out, const LongHeader& header) {
  // Initial: long-header bit, fixed bit, type bits 00. Version Negotiation
  // has no type; the fixed bit is conventionally set as well.
  put_u8(out, kLongHeaderBit | kFixedBit);
  put_u32(out, header.kind == PacketKind::VersionNegotiation ? 0 : header.version);
  put_u8(out, static_cast<std::uint8_t>(header.dcid.size()));
  put_bytes(out, header.dcid.bytes());
  put_u8(out, static_cast<std::uint8_t>(header.scid.size()));
  put_bytes(out, header.scid.bytes());
}

ParsedLongHeader parse_long_header(ByteView datagram) {
  if (datagram.size() < kMinLongHeaderSize) {
    throw Error(ErrorCode::Truncated, "datagram shorter than a long header");
  }
  Reader r(datagram);
  const auto flags = r.u8();
  if (!(flags & kLongHeaderBit)) throw Error(ErrorCode::InvalidArgument, "not a long header");
  const auto version = r.u32();
  auto dcid = read_cid(r);
  auto scid = read_cid(r);
  const auto kind = version == 0 ? PacketKind::VersionNegotiation : PacketKind::Initial;
  return ParsedLongHeader{LongHeader{kind, version, std::move(dcid), std::move(scid)}, r.pos()};
}

Bytes encode_probe(std::uint32_t forced_version, const ConnectionId& dcid,
                   const ConnectionId& scid) {
  if (!is_reserved_version(forced_version)) {
    throw Error(ErrorCode::InvalidVersion, "version lacks the reserved 0x?a?a?a?a pattern");
  }
  if (dcid.size() < 8) throw Error(ErrorCode::CidTooShort, "Initial DCID must be >= 8 octets");
  Bytes out;
  out.reserve(kMinInitialSize);
  append_long_header(out, LongHeader{PacketKind::Initial, forced_version, dcid, scid});
  out.resize(kMinInitialSize, 0);
  return out;
}

Bytes encode_version_negotiation(const ConnectionId& dcid, const ConnectionId& scid,
                                 std::span<const std::uint32_t> versions) {
  Bytes out;
  append_long_header(out, LongHeader{PacketKind::VersionNegotiation, 0, dcid, scid});
  for (auto v : versions) put_u32(out, v);
  return out;
}

std::vector<std::uint32_t> parse_version_negotiation(ByteView datagram,
                                                     const ConnectionId& sent_scid) {
  if (datagram.size() < kMinLongHeaderSize) {
    throw Error(ErrorCode::Truncated, "datagram shorter than a long header");
  }
  if (!(datagram[0] & kLongHeaderBit)) {
    throw Error(ErrorCode::NotVersionNegotiation, "short header");
  }
  // Version-independent parsing: VN CIDs may have any length up to 255.
  Reader r(datagram);
  r.u8();
  if (r.u32() != 0) throw Error(ErrorCode::NotVersionNegotiation, "version field is not 0");
  const auto dcid = r.take(r.u8());
  r.take(r.u8());
  if (!std::equal(dcid.begin(), dcid.end(), sent_scid.bytes().begin(), sent_scid.bytes().end())) {
    throw Error(ErrorCode::EchoMismatch, "DCID does not echo our SCID");
  }
  if (r.remaining() % 4 != 0) throw Error(ErrorCode::Truncated, "partial version entry");
  std::vector<std::uint32_t> versions;
  while (!r.done()) versions.push_back(r.u32());
  return versions;
}

Bytes encode_packet(const Packet& packet, std::size_t pad_to) {
  Bytes out;
  if (const auto* lh = std::get_if<LongHeader>(&packet.header)) {
    append_long_header(out, *lh);
    append_frames(out, packet.frames);
    if (out.size() < pad_to) out.resize(pad_to, 0);
  } else {
    const auto& sh = std::get<ShortHeader>(packet.header);
    put_u8(out, kFixedBit);
    put_bytes(out, sh.dcid.bytes());
    append_frames(out, packet.frames);
  }
  return out;
}

Packet decode_packet(ByteView datagram) {
  if (datagram.empty()) throw Error(ErrorCode::Truncated, "empty datagram");
  if (is_long_header(datagram)) {
    auto parsed = parse_long_header(datagram);
    Packet p{parsed.header, {}};
    if (parsed.header.kind == PacketKind::Initial && parsed.header.version == kQuicV1) {
      p.frames = decode_frames(datagram.subspan(parsed.length));
    }
    return p;
  }
  if (datagram.size() < 1 + kCidLength) throw Error(ErrorCode::Truncated, "short header");
  Packet p{ShortHeader{ConnectionId(datagram.subspan(1, kCidLength))}, {}};
  p.frames = decode_frames(datagram.subspan(1 + kCidLength));
  return p;
}

}  // namespace qmig::wire
