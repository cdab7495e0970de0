#pragma once

#include <memory>
#include <string_view>

#include "qmig/endpoint.hpp"
#include "qmig/net.hpp"

namespace qmig {

// Client-side socket owner: receives datagrams on its bound addresses and
// the timers it scheduled. `path.local` is the receiving socket.
class Receiver {
 public:
  virtual ~Receiver() = default;
  virtual void on_datagram(const PathId& path, ByteView datagram, SimTime now) = 0;
  virtual void on_timer(SimTime now) = 0;
};

enum class SendStatus { Queued, NoRoute };

// What scanners and probers need from the network. The simulator implements
// it; a UDP/QUIC-stack adapter would implement the same contract.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual SimTime now() const = 0;
  virtual void bind(const SocketAddr& local, Receiver& receiver) = 0;
  virtual void unbind(const SocketAddr& local) = 0;
  virtual SendStatus send(const SocketAddr& from, const SocketAddr& to, Bytes datagram) = 0;
  virtual void schedule(Receiver& receiver, SimTime at) = 0;
  // Drops every pending timer of `receiver`; call before destroying it.
  virtual void cancel_timers(Receiver& receiver) = 0;
  // Processes events until none remain. Throws Error(DeadlineExceeded) if
  // events are still pending at `deadline`.
  virtual void run_until_idle(SimTime deadline) = 0;
};

// Placeholder for live scanning. Construction succeeds so the CLI can
// report a clean diagnostic; every operation throws TransportUnavailable.
class RealTransport final : public Transport {
 public:
  SimTime now() const override;
  void bind(const SocketAddr& local, Receiver& receiver) override;
  void unbind(const SocketAddr& local) override;
  SendStatus send(const SocketAddr& from, const SocketAddr& to, Bytes datagram) override;
  void schedule(Receiver& receiver, SimTime at) override;
  void cancel_timers(Receiver& receiver) override;
  void run_until_idle(SimTime deadline) override;
};

}  // namespace qmig
