#include <algorithm>

#include "qmig/endpoint.hpp"
#include "qmig/error.hpp"
#include "qmig/hash.hpp"

namespace qmig {

ServerEndpoint::ServerEndpoint(ServerBehavior behavior, std::uint64_t seed)
    : behavior_(std::move(behavior)), seed_(seed) {}

std::vector<Transmit> ServerEndpoint::handle(ByteView datagram, const PathId& arriving,
                                             SimTime now) {
  (void)now;
  if (wire::is_long_header(datagram)) {
    std::optional<wire::ParsedLongHeader> parsed;
    try {
      parsed = wire::parse_long_header(datagram);
    } catch (const Error&) {
      return {};
    }
    const auto& lh = parsed->header;
    if (lh.kind == wire::PacketKind::VersionNegotiation) return {};
    const auto& versions = behavior_.supported_versions;
    if (std::find(versions.begin(), versions.end(), lh.version) == versions.end()) {
      // Only answer datagrams that meet the anti-amplification floor.
      if (datagram.size() < wire::kMinInitialSize) return {};
      return {Transmit{arriving, wire::encode_version_negotiation(lh.scid, lh.dcid, versions)}};
    }
    if (lh.version != wire::kQuicV1) return {};
    try {
      auto packet = wire::decode_packet(datagram);
      return on_initial(lh, packet.frames, arriving);
    } catch (const Error&) {
      return {};
    }
  }

  std::optional<wire::Packet> packet;
  try {
    packet = wire::decode_packet(datagram);
  } catch (const Error&) {
    return {};
  }
  auto route = routes_.find(packet->dcid());
  if (route == routes_.end()) return {};
  return on_short(route->second, packet->dcid(), packet->frames, arriving);
}

std::vector<Transmit> ServerEndpoint::on_initial(const wire::LongHeader& header,
                                                 const std::vector<wire::Frame>& frames,
                                                 const PathId& arriving) {
  const wire::CryptoClientHello* ch = nullptr;
  for (const auto& f : frames) {
    if (const auto* c = std::get_if<wire::CryptoClientHello>(&f)) ch = c;
  }
  if (ch == nullptr) return {};

  const std::uint64_t id = next_conn_id_++;
  auto& conn = connections_[id];
  conn.rng.seed(Hasher(seed_).add(header.dcid.bytes()).add(arriving).value());
  conn.handshake_path = arriving;
  conn.client_cids.push_back(CidEntry{0, header.scid, true, false});
  conn.path_dcid[arriving] = 0;
  const auto scid = fresh_cid(conn);

  auto close = [&](std::uint16_t code) {
    wire::Packet p{wire::LongHeader{wire::PacketKind::Initial, wire::kQuicV1, header.scid, scid},
                   {wire::ConnectionClose{code}}};
    drop_connection(id);
    return std::vector<Transmit>{Transmit{arriving, wire::encode_packet(p)}};
  };
  if (behavior_.requires_sni && ch->sni.empty()) return close(kCloseUnrecognizedName);
  const auto& alpns = behavior_.alpn_allowlist;
  if (std::find(alpns.begin(), alpns.end(), ch->alpn) == alpns.end()) {
    return close(kCloseNoApplicationProtocol);
  }

  conn.server_cids.push_back(CidEntry{0, scid, true, false});
  routes_[scid] = id;
  wire::TransportParams params{behavior_.disable_active_migration, behavior_.active_cid_limit};
  wire::Packet p{wire::LongHeader{wire::PacketKind::Initial, wire::kQuicV1, header.scid, scid},
                 {wire::CryptoServerHello{params}}};
  return {Transmit{arriving, wire::encode_packet(p)}};
}

std::vector<Transmit> ServerEndpoint::on_short(std::uint64_t conn_id,
                                               const wire::ConnectionId& dcid,
                                               const std::vector<wire::Frame>& frames,
                                               const PathId& arriving) {
  (void)dcid;
  auto& conn = connections_.at(conn_id);
  if (behavior_.disable_active_migration && arriving != conn.handshake_path) return {};

  std::vector<wire::Frame> reply_frames;
  if (!conn.confirmed && arriving == conn.handshake_path) {
    // First 1-RTT packet from the client confirms the handshake; only then
    // does the server hand out its spare CID.
    conn.confirmed = true;
    if (behavior_.issues_extra_cid && !behavior_.disable_active_migration) {
      const auto cid = fresh_cid(conn);
      const std::uint32_t seq = conn.server_cids.back().seq + 1;
      conn.server_cids.push_back(CidEntry{seq, cid, false, false});
      routes_[cid] = conn_id;
      reply_frames.push_back(wire::NewConnectionId{seq, 0, cid});
    }
  }

  for (const auto& frame : frames) {
    if (const auto* ncid = std::get_if<wire::NewConnectionId>(&frame)) {
      const bool known = std::any_of(conn.client_cids.begin(), conn.client_cids.end(),
                                     [&](const CidEntry& e) { return e.seq == ncid->seq; });
      if (!known) conn.client_cids.push_back(CidEntry{ncid->seq, ncid->cid, false, false});
    } else if (const auto* retire = std::get_if<wire::RetireConnectionId>(&frame)) {
      for (auto& e : conn.server_cids) {
        if (e.seq == retire->seq && !e.retired) {
          e.retired = true;
          routes_.erase(e.cid);
        }
      }
    } else if (const auto* pc = std::get_if<wire::PathChallenge>(&frame)) {
      if (behavior_.answers_path_challenge) reply_frames.push_back(wire::PathResponse{pc->data});
    } else if (std::holds_alternative<wire::HttpGet>(frame)) {
      reply_frames.push_back(wire::HttpResponse{200, behavior_.http_server_header});
    } else if (std::holds_alternative<wire::ConnectionClose>(frame)) {
      drop_connection(conn_id);
      return {};
    }
  }
  if (reply_frames.empty()) return {};
  return {reply(conn, arriving, std::move(reply_frames))};
}

std::uint32_t ServerEndpoint::dcid_for_path(Connection& conn, const PathId& path) {
  if (auto it = conn.path_dcid.find(path); it != conn.path_dcid.end()) return it->second;
  // A new path gets a CID the client has not seen on the wire yet.
  std::uint32_t seq = conn.path_dcid.at(conn.handshake_path);
  for (auto& e : conn.client_cids) {
    if (!e.used && !e.retired) {
      e.used = true;
      seq = e.seq;
      break;
    }
  }
  conn.path_dcid[path] = seq;
  return seq;
}

Transmit ServerEndpoint::reply(Connection& conn, const PathId& path,
                               std::vector<wire::Frame> frames) {
  const auto seq = dcid_for_path(conn, path);
  const auto entry = std::find_if(conn.client_cids.begin(), conn.client_cids.end(),
                                  [&](const CidEntry& e) { return e.seq == seq; });
  wire::Packet p{wire::ShortHeader{entry->cid}, std::move(frames)};
  return Transmit{path, wire::encode_packet(p)};
}

wire::ConnectionId ServerEndpoint::fresh_cid(Connection& conn) {
  auto cid = wire::ConnectionId::random(conn.rng);
  while (routes_.count(cid) != 0) cid = wire::ConnectionId::random(conn.rng);
  return cid;
}

void ServerEndpoint::drop_connection(std::uint64_t conn_id) {
  auto it = connections_.find(conn_id);
  if (it == connections_.end()) return;
  for (const auto& e : it->second.server_cids) routes_.erase(e.cid);
  connections_.erase(it);
}

}  // namespace qmig
