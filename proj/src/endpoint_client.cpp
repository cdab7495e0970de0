#include <algorithm>

#include "qmig/endpoint.hpp"
#include "qmig/error.hpp"

namespace qmig {

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::Idle: return "Idle";
    case Phase::HandshakeSent: return "HandshakeSent";
    case Phase::Established: return "Established";
    case Phase::Probing: return "Probing";
    case Phase::Migrated: return "Migrated";
    case Phase::Closed: return "Closed";
  }
  return "?";
}

ClientConnection::ClientConnection(ClientConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed), initial_dcid_(wire::ConnectionId::random(rng_)) {}

Transmit ClientConnection::start(const SocketAddr& local, const SocketAddr& remote,
                                 std::optional<std::string> sni, SimTime now) {
  require_phase(Phase::Idle, "start");
  const auto scid = wire::ConnectionId::random(rng_);
  state_.local_cids.push_back(CidEntry{0, scid, true, false});
  state_.active_path = PathId{local, remote};
  state_.sni_sent = sni;
  state_.phase = Phase::HandshakeSent;
  handshake_deadline_ = now + config_.handshake_timeout;

  wire::Packet initial{wire::LongHeader{wire::PacketKind::Initial, wire::kQuicV1, initial_dcid_, scid},
                       {wire::CryptoClientHello{sni.value_or(""), config_.alpn}}};
  return Transmit{state_.active_path, wire::encode_packet(initial, wire::kMinInitialSize)};
}

Output ClientConnection::handle(ByteView datagram, const PathId& arriving, SimTime now) {
  (void)now;
  Output out;
  if (state_.phase == Phase::Closed || state_.phase == Phase::Idle) return out;

  std::optional<wire::Packet> packet;
  try {
    packet = wire::decode_packet(datagram);
  } catch (const Error& e) {
    violate(std::string("undecodable datagram: ") + e.what());
  }

  if (const auto* lh = std::get_if<wire::LongHeader>(&packet->header)) {
    const bool ours = lh->dcid == state_.local_cids.front().cid;
    if (lh->kind == wire::PacketKind::VersionNegotiation) {
      if (ours && state_.phase == Phase::HandshakeSent) {
        state_.phase = Phase::Closed;
        state_.close_reason = "version negotiation";
        out.events.push_back(event::ClosedByPeer{0});
      }
      return out;
    }
    for (const auto& frame : packet->frames) {
      if (const auto* sh = std::get_if<wire::CryptoServerHello>(&frame)) {
        if (!ours) violate("ServerHello DCID does not echo our SCID");
        on_server_hello(*lh, *sh, arriving, out);
      } else if (const auto* cc = std::get_if<wire::ConnectionClose>(&frame)) {
        if (!ours) continue;
        state_.phase = Phase::Closed;
        state_.close_reason = "closed by peer";
        out.events.push_back(event::ClosedByPeer{cc->code});
        return out;
      }
    }
    return out;
  }

  if (!is_local_cid(packet->dcid())) return out;
  if (state_.phase == Phase::HandshakeSent) return out;

  for (const auto& frame : packet->frames) {
    if (const auto* ncid = std::get_if<wire::NewConnectionId>(&frame)) {
      on_new_cid(*ncid, out);
    } else if (const auto* pr = std::get_if<wire::PathResponse>(&frame)) {
      on_path_response(*pr, arriving, out);
    } else if (const auto* resp = std::get_if<wire::HttpResponse>(&frame)) {
      out.events.push_back(event::HttpDone{resp->status, resp->server_header});
    } else if (const auto* pc = std::get_if<wire::PathChallenge>(&frame)) {
      out.transmits.push_back(
          short_packet(arriving, state_.active_peer_seq, {wire::PathResponse{pc->data}}));
    } else if (const auto* cc = std::get_if<wire::ConnectionClose>(&frame)) {
      state_.phase = Phase::Closed;
      state_.close_reason = "closed by peer";
      out.events.push_back(event::ClosedByPeer{cc->code});
      return out;
    } else if (std::holds_alternative<wire::RetireConnectionId>(frame)) {
      // The server never migrates, so it has nothing our side must stop using.
    } else {
      violate(std::string("unexpected ") + std::string(wire::frame_name(frame)) +
              " in a short-header packet");
    }
  }
  return out;
}

void ClientConnection::on_server_hello(const wire::LongHeader& header,
                                       const wire::CryptoServerHello& sh, const PathId& arriving,
                                       Output& out) {
  (void)arriving;
  if (state_.phase != Phase::HandshakeSent) return;
  if (!sh.transport_params.valid()) violate("active_connection_id_limit below 2");
  state_.peer_cids.push_back(CidEntry{0, header.scid, true, false});
  state_.active_peer_seq = 0;
  state_.peer_params = sh.transport_params;
  state_.phase = Phase::Established;
  handshake_deadline_.reset();
  out.events.push_back(event::HandshakeComplete{});
}

void ClientConnection::on_new_cid(const wire::NewConnectionId& frame, Output& out) {
  for (const auto& entry : state_.peer_cids) {
    if (entry.seq == frame.seq) {
      if (entry.cid == frame.cid) return;  // retransmission
      violate("NEW_CONNECTION_ID reuses sequence " + std::to_string(frame.seq));
    }
    if (entry.cid == frame.cid) violate("NEW_CONNECTION_ID reuses a CID under a new sequence");
  }
  const auto active = std::count_if(state_.peer_cids.begin(), state_.peer_cids.end(),
                                    [](const CidEntry& e) { return !e.retired; });
  if (static_cast<std::size_t>(active) + 1 > config_.active_cid_limit) {
    violate("peer exceeded active_connection_id_limit");
  }
  state_.peer_cids.push_back(CidEntry{frame.seq, frame.cid, false, false});
  std::sort(state_.peer_cids.begin(), state_.peer_cids.end(),
            [](const CidEntry& a, const CidEntry& b) { return a.seq < b.seq; });
  for (auto& entry : state_.peer_cids) {
    if (entry.seq < frame.retire_prior_to) entry.retired = true;
  }
  out.events.push_back(event::CidReceived{frame.seq});
}

void ClientConnection::on_path_response(const wire::PathResponse& frame, const PathId& arriving,
                                        Output& out) {
  if (std::find(stale_challenges_.begin(), stale_challenges_.end(), frame.data) !=
      stale_challenges_.end()) {
    return;
  }
  if (!state_.pending_challenge || frame.data != *state_.pending_challenge) {
    violate("PATH_RESPONSE does not echo the outstanding challenge");
  }
  if (!state_.probing_path || arriving != *state_.probing_path) return;

  stale_challenges_.push_back(*state_.pending_challenge);
  state_.previous_path = state_.active_path;
  state_.previous_peer_seq = state_.active_peer_seq;
  state_.active_path = *state_.probing_path;
  state_.active_peer_seq = *state_.probing_peer_seq;
  state_.probing_path.reset();
  state_.probing_peer_seq.reset();
  state_.pending_challenge.reset();
  path_deadline_.reset();
  state_.phase = Phase::Migrated;
  out.events.push_back(event::PathValidated{state_.active_path});
}

Transmit ClientConnection::issue_cid() {
  require_phase(Phase::Established, "issue_cid");
  const auto active = std::count_if(state_.local_cids.begin(), state_.local_cids.end(),
                                    [](const CidEntry& e) { return !e.retired; });
  if (static_cast<std::size_t>(active) + 1 > state_.peer_params->active_cid_limit) {
    throw Error(ErrorCode::LimitExceeded,
                "peer stores at most " + std::to_string(state_.peer_params->active_cid_limit) +
                    " CIDs");
  }
  auto cid = wire::ConnectionId::random(rng_);
  while (is_local_cid(cid)) cid = wire::ConnectionId::random(rng_);
  const std::uint32_t seq = state_.local_cids.back().seq + 1;
  state_.local_cids.push_back(CidEntry{seq, cid, false, false});
  return short_packet(state_.active_path, state_.active_peer_seq,
                      {wire::NewConnectionId{seq, 0, cid}});
}

Transmit ClientConnection::begin_migration(const SocketAddr& new_local, SimTime now) {
  require_phase(Phase::Established, "begin_migration");
  if (state_.peer_params->disable_active_migration) {
    throw Error(ErrorCode::MigrationDisabled, "peer sent disable_active_migration");
  }
  auto spare = std::find_if(state_.peer_cids.begin(), state_.peer_cids.end(),
                            [](const CidEntry& e) { return !e.used && !e.retired; });
  if (spare == state_.peer_cids.end()) {
    throw Error(ErrorCode::NoSpareCid, "server provided no additional CID");
  }
  if (state_.local_cids.size() < 2) {
    throw Error(ErrorCode::NoIssuedCid, "no CID of ours has been issued to the server");
  }
  if (new_local == state_.active_path.local) {
    throw Error(ErrorCode::InvalidArgument, "migration needs a new local address or port");
  }

  spare->used = true;
  wire::PathData challenge{};
  const std::uint64_t word = rng_();
  for (std::size_t i = 0; i < challenge.size(); ++i) {
    challenge[i] = static_cast<std::uint8_t>(word >> (8 * i));
  }
  state_.probing_path = PathId{new_local, state_.active_path.remote};
  state_.probing_peer_seq = spare->seq;
  state_.pending_challenge = challenge;
  state_.phase = Phase::Probing;
  path_deadline_ = now + config_.path_timeout;
  path_retries_left_ = config_.path_retries;
  ++challenges_sent_;
  return short_packet(*state_.probing_path, spare->seq, {wire::PathChallenge{challenge}});
}

std::optional<Transmit> ClientConnection::retire_old() {
  require_phase(Phase::Migrated, "retire_old");
  auto& old = peer_entry(*state_.previous_peer_seq);
  if (old.retired) return std::nullopt;
  old.retired = true;
  return short_packet(state_.active_path, state_.active_peer_seq,
                      {wire::RetireConnectionId{old.seq}});
}

Transmit ClientConnection::http_get(std::string_view path) {
  if (state_.phase != Phase::Established && state_.phase != Phase::Migrated) {
    throw Error(ErrorCode::WrongPhase,
                "http_get in phase " + std::string(to_string(state_.phase)));
  }
  return short_packet(state_.active_path, state_.active_peer_seq,
                      {wire::HttpGet{std::string(path)}});
}

Output ClientConnection::on_timer(SimTime now) {
  Output out;
  if (state_.phase == Phase::HandshakeSent && handshake_deadline_ && now >= *handshake_deadline_) {
    handshake_deadline_.reset();
    state_.phase = Phase::Closed;
    state_.close_reason = "handshake timeout";
    out.events.push_back(event::Timeout{TimeoutKind::Handshake});
    return out;
  }
  if (state_.phase == Phase::Probing && path_deadline_ && now >= *path_deadline_) {
    if (path_retries_left_ > 0) {
      --path_retries_left_;
      path_deadline_ = now + config_.path_timeout;
      ++challenges_sent_;
      out.transmits.push_back(short_packet(*state_.probing_path, *state_.probing_peer_seq,
                                           {wire::PathChallenge{*state_.pending_challenge}}));
      return out;
    }
    // The old path keeps working: its CID was never retired.
    const PathId failed = *state_.probing_path;
    stale_challenges_.push_back(*state_.pending_challenge);
    state_.probing_path.reset();
    state_.probing_peer_seq.reset();
    state_.pending_challenge.reset();
    path_deadline_.reset();
    state_.phase = Phase::Established;
    out.events.push_back(event::Timeout{TimeoutKind::PathValidation});
    out.events.push_back(event::PathValidationFailed{failed, "timeout"});
  }
  return out;
}

std::optional<SimTime> ClientConnection::next_timer() const {
  if (state_.phase == Phase::HandshakeSent) return handshake_deadline_;
  if (state_.phase == Phase::Probing) return path_deadline_;
  return std::nullopt;
}

void ClientConnection::violate(const std::string& reason) {
  state_.phase = Phase::Closed;
  state_.close_reason = reason;
  state_.probing_path.reset();
  state_.pending_challenge.reset();
  handshake_deadline_.reset();
  path_deadline_.reset();
  throw Error(ErrorCode::ProtocolViolation, reason);
}

void ClientConnection::require_phase(Phase expected, std::string_view op) const {
  if (state_.phase != expected) {
    throw Error(ErrorCode::WrongPhase, std::string(op) + " in phase " +
                                           std::string(to_string(state_.phase)));
  }
}

bool ClientConnection::is_local_cid(const wire::ConnectionId& cid) const {
  return std::any_of(state_.local_cids.begin(), state_.local_cids.end(),
                     [&](const CidEntry& e) { return e.cid == cid && !e.retired; });
}

const CidEntry& ClientConnection::peer_entry(std::uint32_t seq) const {
  for (const auto& e : state_.peer_cids) {
    if (e.seq == seq) return e;
  }
  throw Error(ErrorCode::InvalidArgument, "no peer CID with sequence " + std::to_string(seq));
}

CidEntry& ClientConnection::peer_entry(std::uint32_t seq) {
  return const_cast<CidEntry&>(std::as_const(*this).peer_entry(seq));
}

Transmit ClientConnection::short_packet(const PathId& path, std::uint32_t peer_seq,
                                        std::vector<wire::Frame> frames) const {
  wire::Packet p{wire::ShortHeader{peer_entry(peer_seq).cid}, std::move(frames)};
  return Transmit{path, wire::encode_packet(p)};
}

}  // namespace qmig
