#pragma once

// Deterministic discrete-event network. One virtual clock in milliseconds;
// events at equal timestamps run in insertion order. Server hosts are owned
// by the world and may sit behind a stateless load balancer and a firewall.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "qmig/endpoint.hpp"
#include "qmig/transport.hpp"

namespace qmig::sim {

struct Impairments {
  double loss_rate = 0.0;
  std::uint32_t latency_ms = 10;
  bool firewall_blocks_new_paths = false;
  std::uint8_t lb_backend_count = 1;
  std::uint64_t seed = 0;

  // Throws Error(InvalidArgument) if out of range.
  void validate() const;
};

enum class Direction { ClientToServer, ServerToClient };
enum class Fate { Delivered, Lost, Firewalled, NoRoute };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Fate f) noexcept;

struct TraceRecord {
  SimTime sent_at{0};
  SimTime deliver_at{0};
  Direction dir = Direction::ClientToServer;
  PathId path;  // sender-oriented
  Bytes datagram;
  Fate fate = Fate::Delivered;
  std::optional<std::uint8_t> backend;

  // Best-effort decode; empty for probes, VN packets, and garbage.
  std::vector<wire::Frame> frames() const;
  std::optional<wire::ConnectionId> dcid() const;
  bool long_header() const { return wire::is_long_header(datagram); }
};

// One JSON object per line: t, deliver_at, dir, path, kind, dcid, frames[],
// fate, backend.
void write_trace_jsonl(std::span<const TraceRecord> trace, std::ostream& out);

class World final : public Transport {
 public:
  explicit World(std::uint64_t seed = 0);
  ~World() override;

  // Every port of `ip` is served by `impairments.lb_backend_count` backends
  // sharing `behavior`.
  void add_server(const IpAddress& ip, ServerBehavior behavior, Impairments impairments = {});
  bool has_host(const IpAddress& ip) const;

  // Backend a client-to-server 4-tuple hashes to (path.local = client).
  std::uint8_t backend_for(const IpAddress& server, const PathId& path) const;

  SimTime now() const override { return now_; }
  void bind(const SocketAddr& local, Receiver& receiver) override;
  void unbind(const SocketAddr& local) override;
  // Throws Error(UnknownPath) when `from` is neither bound nor a server.
  SendStatus send(const SocketAddr& from, const SocketAddr& to, Bytes datagram) override;
  void schedule(Receiver& receiver, SimTime at) override;
  void cancel_timers(Receiver& receiver) override;
  void run_until_idle(SimTime deadline) override;

  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
  void set_record_trace(bool on) noexcept { record_trace_ = on; }
  std::uint64_t datagrams_sent() const noexcept { return datagrams_sent_; }

 private:
  struct ServerHost;
  struct Deliver {
    SocketAddr to;
    PathId path;  // receiver-oriented
    Bytes datagram;
    std::optional<std::uint8_t> backend;
  };
  struct Timer {
    Receiver* receiver;
  };
  using Key = std::pair<SimTime, std::uint64_t>;

  void deliver(Deliver& d);
  double loss_draw(ServerHost& host, const PathId& c2s, Direction dir);

  std::uint64_t seed_;
  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::map<Key, std::variant<Deliver, Timer>> queue_;
  std::map<SocketAddr, Receiver*> sockets_;
  std::map<IpAddress, std::unique_ptr<ServerHost>> servers_;
  std::vector<TraceRecord> trace_;
  bool record_trace_ = true;
  std::uint64_t datagrams_sent_ = 0;
};

}  // namespace qmig::sim
