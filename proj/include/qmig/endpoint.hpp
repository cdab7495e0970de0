#pragma once

// Client and server connection state machines for the simulated QUIC
// connection: handshake, connection-ID exchange, client-initiated migration
// with path validation, and a single HTTP request/response.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "qmig/net.hpp"
#include "qmig/wire.hpp"

namespace qmig {

// Virtual time since the start of a simulation run.
using SimTime = std::chrono::milliseconds;

struct CidEntry {
  std::uint32_t seq = 0;
  wire::ConnectionId cid;
  bool used = false;
  bool retired = false;
};

enum class Phase { Idle, HandshakeSent, Established, Probing, Migrated, Closed };
std::string_view to_string(Phase phase) noexcept;

struct ConnectionState {
  Phase phase = Phase::Idle;
  std::vector<CidEntry> local_cids;  // issued by us to the peer
  std::vector<CidEntry> peer_cids;   // received from the peer
  PathId active_path;
  std::optional<PathId> probing_path;
  std::optional<wire::PathData> pending_challenge;
  std::optional<wire::TransportParams> peer_params;
  std::optional<std::string> sni_sent;

  // Peer CID used as DCID on active_path, and the one bound to the path we
  // migrated away from.
  std::uint32_t active_peer_seq = 0;
  std::optional<std::uint32_t> previous_peer_seq;
  std::optional<PathId> previous_path;
  std::optional<std::uint32_t> probing_peer_seq;
  std::optional<std::string> close_reason;
};

enum class TimeoutKind { Handshake, PathValidation };

namespace event {
struct HandshakeComplete {};
struct CidReceived {
  std::uint32_t seq = 0;
};
struct PathValidated {
  PathId path;
};
struct PathValidationFailed {
  PathId path;
  std::string reason;
};
struct HttpDone {
  std::uint16_t status = 0;
  std::string server_header;
};
struct ClosedByPeer {
  std::uint16_t code = 0;
};
struct Timeout {
  TimeoutKind what = TimeoutKind::Handshake;
};
}  // namespace event

using Event = std::variant<event::HandshakeComplete, event::CidReceived, event::PathValidated,
                           event::PathValidationFailed, event::HttpDone, event::ClosedByPeer,
                           event::Timeout>;

// A datagram to put on the wire. `path.local` is the sending side.
struct Transmit {
  PathId path;
  Bytes datagram;
};

struct ClientConfig {
  SimTime handshake_timeout{3000};
  SimTime path_timeout{1000};
  std::uint32_t path_retries = 2;
  // How many peer CIDs we are willing to store.
  std::uint8_t active_cid_limit = 8;
  std::string alpn = "h3";
};

struct Output {
  std::vector<Transmit> transmits;
  std::vector<Event> events;
};

class ClientConnection {
 public:
  ClientConnection(ClientConfig config, std::uint64_t seed);

  // Sends the Initial carrying the Client Hello. Phase Idle -> HandshakeSent.
  Transmit start(const SocketAddr& local, const SocketAddr& remote,
                 std::optional<std::string> sni, SimTime now);

  // Throws Error(ProtocolViolation) after moving to Closed when the peer
  // misbehaves. Datagrams for unknown CIDs are ignored.
  Output handle(ByteView datagram, const PathId& arriving_path, SimTime now);

  // Announces a fresh CID of ours. Throws LimitExceeded, WrongPhase.
  Transmit issue_cid();

  // Probes `new_local` with a PATH_CHALLENGE on an unused peer CID. Throws
  // WrongPhase, MigrationDisabled, NoSpareCid, NoIssuedCid.
  Transmit begin_migration(const SocketAddr& new_local, SimTime now);

  // Retires the CID of the abandoned path; nullopt if already retired.
  std::optional<Transmit> retire_old();

  Transmit http_get(std::string_view path);

  // Expires the handshake and retransmits or abandons the path probe.
  Output on_timer(SimTime now);
  std::optional<SimTime> next_timer() const;

  const ConnectionState& state() const noexcept { return state_; }
  std::uint32_t challenges_sent() const noexcept { return challenges_sent_; }

 private:
  void on_server_hello(const wire::LongHeader& header, const wire::CryptoServerHello& sh,
                       const PathId& arriving, Output& out);
  void on_new_cid(const wire::NewConnectionId& frame, Output& out);
  void on_path_response(const wire::PathResponse& frame, const PathId& arriving, Output& out);
  [[noreturn]] void violate(const std::string& reason);
  void require_phase(Phase expected, std::string_view op) const;
  bool is_local_cid(const wire::ConnectionId& cid) const;
  const CidEntry& peer_entry(std::uint32_t seq) const;
  CidEntry& peer_entry(std::uint32_t seq);
  Transmit short_packet(const PathId& path, std::uint32_t peer_seq,
                        std::vector<wire::Frame> frames) const;

  ClientConfig config_;
  std::mt19937_64 rng_;
  ConnectionState state_;
  wire::ConnectionId initial_dcid_;
  std::optional<SimTime> handshake_deadline_;
  std::optional<SimTime> path_deadline_;
  std::uint32_t path_retries_left_ = 0;
  std::uint32_t challenges_sent_ = 0;
  // Challenges already validated or abandoned; late answers are ignored.
  std::vector<wire::PathData> stale_challenges_;
};

struct ServerBehavior {
  bool requires_sni = false;
  bool issues_extra_cid = true;
  bool disable_active_migration = false;
  bool answers_path_challenge = true;
  std::string http_server_header = "quic";
  std::vector<std::string> alpn_allowlist{"h3"};
  std::vector<std::uint32_t> supported_versions{wire::kQuicV1};
  std::uint8_t active_cid_limit = 4;
};

// TLS alerts carried as QUIC crypto errors (0x100 + alert).
inline constexpr std::uint16_t kCloseUnrecognizedName = 0x100 + 112;
inline constexpr std::uint16_t kCloseNoApplicationProtocol = 0x100 + 120;

// One server backend. Holds any number of connections, each routed by the
// CIDs this backend issued; packets for CIDs it never issued are dropped,
// which is what a misrouted datagram behind a load balancer looks like.
class ServerEndpoint {
 public:
  ServerEndpoint(ServerBehavior behavior, std::uint64_t seed);

  std::vector<Transmit> handle(ByteView datagram, const PathId& arriving_path, SimTime now);

  const ServerBehavior& behavior() const noexcept { return behavior_; }
  std::size_t connection_count() const noexcept { return connections_.size(); }

 private:
  struct Connection {
    PathId handshake_path;
    std::vector<CidEntry> client_cids;
    std::vector<CidEntry> server_cids;
    std::map<PathId, std::uint32_t> path_dcid;  // client CID seq used per path
    bool confirmed = false;
    std::mt19937_64 rng;
  };

  std::vector<Transmit> on_initial(const wire::LongHeader& header,
                                   const std::vector<wire::Frame>& frames,
                                   const PathId& arriving);
  std::vector<Transmit> on_short(std::uint64_t conn_id, const wire::ConnectionId& dcid,
                                 const std::vector<wire::Frame>& frames, const PathId& arriving);
  std::uint32_t dcid_for_path(Connection& conn, const PathId& path);
  Transmit reply(Connection& conn, const PathId& path, std::vector<wire::Frame> frames);
  wire::ConnectionId fresh_cid(Connection& conn);
  void drop_connection(std::uint64_t conn_id);

  ServerBehavior behavior_;
  std::uint64_t seed_;
  std::uint64_t next_conn_id_ = 0;
  std::map<std::uint64_t, Connection> connections_;
  std::map<wire::ConnectionId, std::uint64_t> routes_;
};

}  // namespace qmig
