#include <gtest/gtest.h>

#include <random>

#include "qmig/error.hpp"
#include "qmig/wire.hpp"

using namespace qmig;
using namespace qmig::wire;

namespace {

ConnectionId cid_of(std::initializer_list<std::uint8_t> bytes) {
  std::vector<std::uint8_t> v(bytes);
  return ConnectionId(ByteView(v.data(), v.size()));
}

ConnectionId cid8(std::uint8_t fill) {
  std::vector<std::uint8_t> v(8, fill);
  return ConnectionId(ByteView(v.data(), v.size()));
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

Frame random_frame(std::mt19937_64& rng) {
  auto pick = [&](std::uint64_t n) { return rng() % n; };
  auto text = [&](std::size_t max) {
    std::string s(pick(max + 1), ' ');
    for (auto& c : s) c = static_cast<char>('a' + pick(26));
    return s;
  };
  PathData d{};
  for (auto& b : d) b = static_cast<std::uint8_t>(rng());
  switch (pick(9)) {
    case 0: return CryptoClientHello{text(40), text(5)};
    case 1: return CryptoServerHello{TransportParams{pick(2) == 1, static_cast<std::uint8_t>(2 + pick(8))}};
    case 2: {
      const auto seq = static_cast<std::uint32_t>(rng());
      return NewConnectionId{seq, static_cast<std::uint32_t>(seq ? rng() % seq : 0),
                             ConnectionId::random(rng, 1 + pick(20))};
    }
    case 3: return RetireConnectionId{static_cast<std::uint32_t>(rng())};
    case 4: return PathChallenge{d};
    case 5: return PathResponse{d};
    case 6: return HttpGet{"/" + text(30)};
    case 7: return HttpResponse{static_cast<std::uint16_t>(rng()), text(20)};
    default: return ConnectionClose{static_cast<std::uint16_t>(rng())};
  }
}

}  // namespace

TEST(ConnectionIdTest, LengthBounds) {
  std::vector<std::uint8_t> bytes(21, 1);
  EXPECT_EQ(code_of([&] { ConnectionId(ByteView(bytes.data(), 0)); }), ErrorCode::InvalidCid);
  EXPECT_EQ(code_of([&] { ConnectionId(ByteView(bytes.data(), 21)); }), ErrorCode::InvalidCid);
  EXPECT_EQ(ConnectionId(ByteView(bytes.data(), 1)).size(), 1u);
  EXPECT_EQ(ConnectionId(ByteView(bytes.data(), 20)).size(), 20u);
}

TEST(ConnectionIdTest, ByteWiseEquality) {
  EXPECT_EQ(cid_of({1, 2, 3}), cid_of({1, 2, 3}));
  EXPECT_NE(cid_of({1, 2, 3}), cid_of({1, 2, 4}));
  EXPECT_NE(cid_of({1, 2}), cid_of({1, 2, 0}));
  EXPECT_EQ(cid_of({0xab, 0x01}).hex(), "ab01");
}

TEST(FrameCodec, EmptyList) {
  EXPECT_TRUE(encode_frames({}).empty());
  EXPECT_TRUE(decode_frames({}).empty());
}

TEST(FrameCodec, PathChallengeBitExact) {
  const std::vector<Frame> frames{PathChallenge{{1, 2, 3, 4, 5, 6, 7, 8}}};
  const Bytes expected{0x09, 1, 2, 3, 4, 5, 6, 7, 8};
  const auto encoded = encode_frames(frames);
  EXPECT_EQ(encoded, expected);
  EXPECT_EQ(decode_frames(encoded), frames);
}

TEST(FrameCodec, LayoutsMatchTable) {
  EXPECT_EQ(encode_frames(std::vector<Frame>{CryptoClientHello{"ab", "h3"}}),
            (Bytes{0x01, 0x00, 0x02, 'a', 'b', 0x02, 'h', '3'}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{CryptoServerHello{TransportParams{true, 4}}}),
            (Bytes{0x02, 0x01, 0x04}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{NewConnectionId{1, 0, cid_of({0xaa, 0xbb})}}),
            (Bytes{0x07, 0, 0, 0, 1, 0, 0, 0, 0, 0x02, 0xaa, 0xbb}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{RetireConnectionId{0x01020304}}),
            (Bytes{0x08, 1, 2, 3, 4}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{PathResponse{{8, 7, 6, 5, 4, 3, 2, 1}}}),
            (Bytes{0x0A, 8, 7, 6, 5, 4, 3, 2, 1}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{HttpGet{"/"}}), (Bytes{0x10, 0x00, 0x01, '/'}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{HttpResponse{200, "ng"}}),
            (Bytes{0x11, 0x00, 0xc8, 0x00, 0x02, 'n', 'g'}));
  EXPECT_EQ(encode_frames(std::vector<Frame>{ConnectionClose{0x178}}), (Bytes{0x12, 0x01, 0x78}));
}

TEST(FrameCodec, UnknownTypeRejected) {
  const Bytes payload{0xFF};
  EXPECT_EQ(code_of([&] { decode_frames(payload); }), ErrorCode::UnknownFrameType);
}

TEST(FrameCodec, TruncatedBody) {
  const Bytes payload{0x09, 1, 2, 3};
  EXPECT_EQ(code_of([&] { decode_frames(payload); }), ErrorCode::Truncated);
  const Bytes sni{0x01, 0x00, 0x05, 'a'};
  EXPECT_EQ(code_of([&] { decode_frames(sni); }), ErrorCode::Truncated);
}

TEST(FrameCodec, PaddingSkipped) {
  const Bytes payload{0x00, 0x00, 0x08, 0, 0, 0, 7, 0x00};
  const auto frames = decode_frames(payload);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(std::get<RetireConnectionId>(frames[0]).seq, 7u);
}

TEST(FrameCodec, RetirePriorToAboveSeqRejected) {
  const std::vector<Frame> frames{NewConnectionId{1, 2, cid8(1)}};
  EXPECT_EQ(code_of([&] { encode_frames(frames); }), ErrorCode::InvalidFrame);
  const Bytes raw{0x07, 0, 0, 0, 1, 0, 0, 0, 2, 0x01, 0xaa};
  EXPECT_EQ(code_of([&] { decode_frames(raw); }), ErrorCode::InvalidFrame);
}

TEST(FrameCodec, RandomRoundTrip) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Frame> frames;
    const auto n = rng() % 6;
    for (std::size_t i = 0; i < n; ++i) frames.push_back(random_frame(rng));
    ASSERT_EQ(decode_frames(encode_frames(frames)), frames) << "trial " << trial;
  }
}

TEST(FrameNames, Stable) {
  EXPECT_EQ(frame_name(PathChallenge{}), "PATH_CHALLENGE");
  EXPECT_EQ(frame_name(NewConnectionId{0, 0, cid8(1)}), "NEW_CONNECTION_ID");
  EXPECT_EQ(frame_type(HttpResponse{}), FrameType::HttpResponse);
}

TEST(Probe, LayoutAndSize) {
  const auto dcid = cid8(0x11);
  const auto scid = cid8(0x22);
  const auto probe = encode_probe(kForcedVersion, dcid, scid);
  ASSERT_EQ(probe.size(), 1200u);
  EXPECT_TRUE(probe[0] & 0x80);
  EXPECT_EQ(probe[1], 0x1a);
  EXPECT_EQ(probe[2], 0x2a);
  EXPECT_EQ(probe[3], 0x3a);
  EXPECT_EQ(probe[4], 0x4a);
  EXPECT_EQ(probe[5], 8);
  EXPECT_EQ(probe[6], 0x11);
  EXPECT_EQ(probe[14], 8);
  EXPECT_EQ(probe[15], 0x22);
  for (std::size_t i = 23; i < probe.size(); ++i) ASSERT_EQ(probe[i], 0) << i;
}

TEST(Probe, RoundTripsThroughLongHeaderParser) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto dcid = ConnectionId::random(rng, 8 + rng() % 13);
    const auto scid = ConnectionId::random(rng, 1 + rng() % 20);
    const std::uint32_t version = (static_cast<std::uint32_t>(rng()) & 0xf0f0f0f0u) | 0x0a0a0a0au;
    const auto parsed = parse_long_header(encode_probe(version, dcid, scid));
    EXPECT_EQ(parsed.header.version, version);
    EXPECT_EQ(parsed.header.dcid, dcid);
    EXPECT_EQ(parsed.header.scid, scid);
  }
}

TEST(Probe, RejectsBadInputs) {
  EXPECT_EQ(code_of([] { encode_probe(0x00000001, cid8(1), cid8(2)); }), ErrorCode::InvalidVersion);
  EXPECT_EQ(code_of([] { encode_probe(kForcedVersion, cid_of({1, 2, 3, 4, 5, 6, 7}), cid8(2)); }),
            ErrorCode::CidTooShort);
}

TEST(VersionNegotiation, SingleVersion) {
  const auto scid = cid8(0x33);
  const std::vector<std::uint32_t> versions{kQuicV1};
  const auto vn = encode_version_negotiation(scid, cid8(0x44), versions);
  EXPECT_EQ(parse_version_negotiation(vn, scid), versions);
}

TEST(VersionNegotiation, RoundTripKeepsOrder) {
  const auto scid = cid8(0x33);
  const std::vector<std::uint32_t> versions{1, 0x6b3343cf};
  const auto vn = encode_version_negotiation(scid, cid8(0x44), versions);
  EXPECT_EQ(parse_version_negotiation(vn, scid), versions);
  const std::vector<std::uint32_t> reversed{0x6b3343cf, 1};
  EXPECT_EQ(parse_version_negotiation(encode_version_negotiation(scid, cid8(0x44), reversed), scid),
            reversed);
}

TEST(VersionNegotiation, Errors) {
  const auto scid = cid8(0x33);
  const std::vector<std::uint32_t> versions{kQuicV1};
  const auto vn = encode_version_negotiation(scid, cid8(0x44), versions);
  EXPECT_EQ(code_of([&] { parse_version_negotiation(vn, cid8(0x34)); }), ErrorCode::EchoMismatch);

  const auto probe = encode_probe(kForcedVersion, cid8(1), scid);
  EXPECT_EQ(code_of([&] { parse_version_negotiation(probe, scid); }),
            ErrorCode::NotVersionNegotiation);

  const Bytes tiny(vn.begin(), vn.begin() + 4);
  EXPECT_EQ(code_of([&] { parse_version_negotiation(tiny, scid); }), ErrorCode::Truncated);
  Bytes partial = vn;
  partial.pop_back();
  EXPECT_EQ(code_of([&] { parse_version_negotiation(partial, scid); }), ErrorCode::Truncated);
}

TEST(Packet, InitialPaddedAndDecoded) {
  const Packet p{LongHeader{PacketKind::Initial, kQuicV1, cid8(1), cid8(2)},
                 {CryptoClientHello{"example.com", "h3"}}};
  const auto bytes = encode_packet(p, kMinInitialSize);
  EXPECT_EQ(bytes.size(), kMinInitialSize);
  const auto back = decode_packet(bytes);
  EXPECT_EQ(back.header, p.header);
  EXPECT_EQ(back.frames, p.frames);
}

TEST(Packet, ShortHeaderRoundTrip) {
  const Packet p{ShortHeader{cid8(9)}, {PathChallenge{{1, 1, 2, 3, 5, 8, 13, 21}}, HttpGet{"/"}}};
  const auto bytes = encode_packet(p);
  EXPECT_FALSE(is_long_header(bytes));
  EXPECT_EQ(bytes.size(), 1 + 8 + 9 + 4u);
  const auto back = decode_packet(bytes);
  EXPECT_EQ(back.dcid(), cid8(9));
  EXPECT_EQ(back.frames, p.frames);
}

TEST(Packet, VersionNegotiationDecodesWithoutFrames) {
  const std::vector<std::uint32_t> versions{kQuicV1};
  const auto back = decode_packet(encode_version_negotiation(cid8(1), cid8(2), versions));
  ASSERT_TRUE(back.is_long());
  EXPECT_EQ(std::get<LongHeader>(back.header).kind, PacketKind::VersionNegotiation);
  EXPECT_EQ(std::get<LongHeader>(back.header).version, 0u);
  EXPECT_TRUE(back.frames.empty());
}

TEST(Packet, TruncatedShortHeader) {
  const Bytes b{0x40, 1, 2, 3};
  EXPECT_EQ(code_of([&] { decode_packet(b); }), ErrorCode::Truncated);
  EXPECT_EQ(code_of([&] { decode_packet({}); }), ErrorCode::Truncated);
}
