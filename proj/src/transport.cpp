#include "qmig/transport.hpp"

#include "qmig/error.hpp"

namespace qmig {
namespace {

[[noreturn]] void unavailable() {
  throw Error(ErrorCode::TransportUnavailable,
              "live UDP transport needs a QUIC stack adapter; only the simulator is built in");
}

}  // namespace

SimTime RealTransport::now() const { unavailable(); }
void RealTransport::bind(const SocketAddr&, Receiver&) { unavailable(); }
void RealTransport::unbind(const SocketAddr&) { unavailable(); }
SendStatus RealTransport::send(const SocketAddr&, const SocketAddr&, Bytes) { unavailable(); }
void RealTransport::schedule(Receiver&, SimTime) { unavailable(); }
void RealTransport::cancel_timers(Receiver&) { unavailable(); }
void RealTransport::run_until_idle(SimTime) { unavailable(); }

}  // namespace qmig
