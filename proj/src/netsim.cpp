#include "qmig/netsim.hpp"

#include <ostream>

#include "json.hpp"
#include "qmig/error.hpp"
#include "qmig/hash.hpp"

namespace qmig::sim {
namespace {

nlohmann::json frame_json(const wire::Frame& frame) {
  nlohmann::json j;
  j["type"] = wire::frame_name(frame);
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, wire::CryptoClientHello>) {
          j["sni"] = f.sni;
          j["alpn"] = f.alpn;
        } else if constexpr (std::is_same_v<F, wire::CryptoServerHello>) {
          j["disable_active_migration"] = f.transport_params.disable_active_migration;
          j["active_cid_limit"] = f.transport_params.active_cid_limit;
        } else if constexpr (std::is_same_v<F, wire::NewConnectionId>) {
          j["seq"] = f.seq;
          j["retire_prior_to"] = f.retire_prior_to;
          j["cid"] = f.cid.hex();
        } else if constexpr (std::is_same_v<F, wire::RetireConnectionId>) {
          j["seq"] = f.seq;
        } else if constexpr (std::is_same_v<F, wire::PathChallenge> ||
                             std::is_same_v<F, wire::PathResponse>) {
          j["data"] = to_hex(f.data);
        } else if constexpr (std::is_same_v<F, wire::HttpGet>) {
          j["path"] = f.path;
        } else if constexpr (std::is_same_v<F, wire::HttpResponse>) {
          j["status"] = f.status;
          j["server"] = f.server_header;
        } else if constexpr (std::is_same_v<F, wire::ConnectionClose>) {
          j["code"] = f.code;
        }
      },
      frame);
  return j;
}

std::string_view packet_kind(const Bytes& datagram) {
  if (!wire::is_long_header(datagram)) return "short";
  if (datagram.size() < 5) return "long";
  const std::uint32_t version = (std::uint32_t{datagram[1]} << 24) |
                                (std::uint32_t{datagram[2]} << 16) |
                                (std::uint32_t{datagram[3]} << 8) | datagram[4];
  if (version == 0) return "vn";
  if (version == wire::kQuicV1) return "initial";
  return "probe";
}

}  // namespace

struct World::ServerHost {
  Impairments impairments;
  std::vector<ServerEndpoint> backends;
  std::set<PathId> handshake_tuples;          // client-oriented
  std::map<std::pair<PathId, int>, std::uint64_t> flow_counters;
};

void Impairments::validate() const {
  if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "loss_rate must be within [0, 1]");
  }
  if (lb_backend_count < 1) throw Error(ErrorCode::InvalidArgument, "lb_backend_count must be >= 1");
}

std::string_view to_string(Direction d) noexcept {
  return d == Direction::ClientToServer ? "c2s" : "s2c";
}

std::string_view to_string(Fate f) noexcept {
  switch (f) {
    case Fate::Delivered: return "delivered";
    case Fate::Lost: return "lost";
    case Fate::Firewalled: return "firewalled";
    case Fate::NoRoute: return "no_route";
  }
  return "?";
}

std::vector<wire::Frame> TraceRecord::frames() const {
  try {
    return wire::decode_packet(datagram).frames;
  } catch (const Error&) {
    return {};
  }
}

std::optional<wire::ConnectionId> TraceRecord::dcid() const {
  try {
    if (!wire::is_long_header(datagram)) {
      if (datagram.size() < 1 + wire::kCidLength) return std::nullopt;
      return wire::ConnectionId(ByteView(datagram).subspan(1, wire::kCidLength));
    }
    return wire::parse_long_header(datagram).header.dcid;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void write_trace_jsonl(std::span<const TraceRecord> trace, std::ostream& out) {
  for (const auto& r : trace) {
    nlohmann::json j;
    j["t"] = r.sent_at.count();
    j["deliver_at"] = r.deliver_at.count();
    j["dir"] = to_string(r.dir);
    j["path"] = r.path.to_string();
    j["kind"] = packet_kind(r.datagram);
    if (auto d = r.dcid()) j["dcid"] = d->hex();
    j["frames"] = nlohmann::json::array();
    for (const auto& f : r.frames()) j["frames"].push_back(frame_json(f));
    j["fate"] = to_string(r.fate);
    if (r.backend) j["backend"] = *r.backend;
    out << j.dump() << '\n';
  }
}

World::World(std::uint64_t seed) : seed_(seed) {}
World::~World() = default;

void World::add_server(const IpAddress& ip, ServerBehavior behavior, Impairments impairments) {
  impairments.validate();
  auto host = std::make_unique<ServerHost>();
  host->impairments = impairments;
  for (std::uint8_t i = 0; i < impairments.lb_backend_count; ++i) {
    const auto backend_seed = Hasher(seed_).add(ip.octets()).add(impairments.seed).add(i).value();
    host->backends.emplace_back(behavior, backend_seed);
  }
  servers_[ip] = std::move(host);
}

bool World::has_host(const IpAddress& ip) const { return servers_.count(ip) != 0; }

std::uint8_t World::backend_for(const IpAddress& server, const PathId& path) const {
  const auto& host = *servers_.at(server);
  const auto n = host.impairments.lb_backend_count;
  if (n == 1) return 0;
  return static_cast<std::uint8_t>(Hasher(host.impairments.seed).add(path).value() % n);
}

void World::bind(const SocketAddr& local, Receiver& receiver) {
  if (servers_.count(local.ip)) {
    throw Error(ErrorCode::InvalidArgument, local.to_string() + " belongs to a server host");
  }
  auto [it, inserted] = sockets_.emplace(local, &receiver);
  if (!inserted) throw Error(ErrorCode::InvalidArgument, local.to_string() + " already bound");
}

void World::unbind(const SocketAddr& local) { sockets_.erase(local); }

double World::loss_draw(ServerHost& host, const PathId& c2s, Direction dir) {
  // Keyed by flow and per-flow sequence, so concurrent flows to other hosts
  // cannot shift this flow's draws.
  auto& counter = host.flow_counters[{c2s, static_cast<int>(dir)}];
  const auto n = counter++;
  return Hasher(seed_ ^ host.impairments.seed)
      .add(c2s)
      .add(static_cast<std::uint64_t>(dir))
      .add(n)
      .unit();
}

SendStatus World::send(const SocketAddr& from, const SocketAddr& to, Bytes datagram) {
  const bool from_server = servers_.count(from.ip) != 0;
  if (!from_server && sockets_.count(from) == 0) {
    throw Error(ErrorCode::UnknownPath, "no socket bound at " + from.to_string());
  }
  ++datagrams_sent_;
  TraceRecord rec;
  rec.sent_at = now_;
  rec.path = PathId{from, to};
  rec.dir = from_server ? Direction::ServerToClient : Direction::ClientToServer;

  auto finish = [&](Fate fate, SendStatus status) {
    rec.fate = fate;
    rec.datagram = std::move(datagram);
    if (record_trace_) trace_.push_back(std::move(rec));
    return status;
  };

  ServerHost* host = nullptr;
  PathId c2s;
  if (from_server) {
    host = servers_.at(from.ip).get();
    c2s = PathId{to, from};
    if (sockets_.count(to) == 0) return finish(Fate::NoRoute, SendStatus::NoRoute);
  } else {
    auto it = servers_.find(to.ip);
    const bool to_socket = sockets_.count(to) != 0;
    if (it == servers_.end() && !to_socket) return finish(Fate::NoRoute, SendStatus::NoRoute);
    if (it != servers_.end()) {
      host = it->second.get();
      c2s = PathId{from, to};
    }
  }

  SimTime latency{10};
  std::optional<std::uint8_t> backend;
  if (host != nullptr) {
    const auto& imp = host->impairments;
    latency = SimTime(imp.latency_ms);
    if (!from_server) {
      backend = backend_for(to.ip, c2s);
      rec.backend = backend;
      if (wire::is_long_header(datagram)) {
        host->handshake_tuples.insert(c2s);
      } else if (imp.firewall_blocks_new_paths && host->handshake_tuples.count(c2s) == 0) {
        return finish(Fate::Firewalled, SendStatus::Queued);
      }
    }
    if (imp.loss_rate > 0.0 && loss_draw(*host, c2s, rec.dir) < imp.loss_rate) {
      return finish(Fate::Lost, SendStatus::Queued);
    }
  }

  rec.deliver_at = now_ + latency;
  queue_.emplace(Key{rec.deliver_at, next_seq_++},
                 Deliver{to, PathId{to, from}, datagram, backend});
  return finish(Fate::Delivered, SendStatus::Queued);
}

void World::schedule(Receiver& receiver, SimTime at) {
  queue_.emplace(Key{std::max(at, now_), next_seq_++}, Timer{&receiver});
}

void World::cancel_timers(Receiver& receiver) {
  for (auto it = queue_.begin(); it != queue_.end();) {
    const auto* timer = std::get_if<Timer>(&it->second);
    if (timer && timer->receiver == &receiver) {
      it = queue_.erase(it);
    } else {
      ++it;
    }
  }
}

void World::deliver(Deliver& d) {
  if (auto host = servers_.find(d.to.ip); host != servers_.end()) {
    auto& backend = host->second->backends.at(d.backend.value_or(0));
    for (auto& tx : backend.handle(d.datagram, d.path, now_)) {
      send(tx.path.local, tx.path.remote, std::move(tx.datagram));
    }
    return;
  }
  // The socket may have closed while the datagram was in flight.
  if (auto sock = sockets_.find(d.to); sock != sockets_.end()) {
    sock->second->on_datagram(d.path, d.datagram, now_);
  }
}

void World::run_until_idle(SimTime deadline) {
  while (!queue_.empty()) {
    auto it = queue_.begin();
    if (it->first.first > deadline) {
      throw Error(ErrorCode::DeadlineExceeded,
                  "events pending past t=" + std::to_string(deadline.count()) + "ms");
    }
    now_ = it->first.first;
    auto ev = std::move(it->second);
    queue_.erase(it);
    if (auto* d = std::get_if<Deliver>(&ev)) {
      deliver(*d);
    } else {
      std::get<Timer>(ev).receiver->on_timer(now_);
    }
  }
}

}  // namespace qmig::sim
