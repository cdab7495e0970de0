#include "qmig/scanner.hpp"

#include <algorithm>
#include <memory>

#include "qmig/endpoint.hpp"
#include "qmig/error.hpp"
#include "qmig/hash.hpp"

namespace qmig::scan {
namespace {

class Session final : public Receiver {
 public:
  using Done = std::function<void(std::size_t, const ScanOutcome&)>;

  Session(const Target& target, const ScanConfig& config, Transport& transport, std::size_t index,
          Done done)
      : config_(config),
        transport_(transport),
        index_(index),
        done_(std::move(done)),
        client_(client_config(config), Hasher(config.seed).add(index).add(target.ip.octets()).value()) {
    outcome_.target = target;
    const auto& ip = target.ip.is_v4() ? config.local_v4 : config.local_v6;
    const auto port = static_cast<std::uint16_t>(config.base_port + 2 * (index % 16384));
    handshake_local_ = SocketAddr{ip, port};
    migration_local_ = SocketAddr{ip, static_cast<std::uint16_t>(port + 1)};
  }

  ~Session() override { release(); }

  const ScanOutcome& outcome() const noexcept { return outcome_; }

  void start() {
    transport_.bind(handshake_local_, *this);
    transport_.bind(migration_local_, *this);
    bound_ = true;
    started_ = transport_.now();
    outcome_.sni_used = outcome_.target.primary_sni();
    auto tx = client_.start(handshake_local_, outcome_.target.addr(), outcome_.sni_used, started_);
    if (send(tx) == SendStatus::NoRoute) unreachable_ = true;
    rearm();
  }

  void on_datagram(const PathId& path, ByteView datagram, SimTime now) override {
    if (finished_) return;
    try {
      process(client_.handle(datagram, path, now), now);
    } catch (const Error&) {
      finish(ErrorClass::ProtocolViolation);
      return;
    }
    rearm();
  }

  void on_timer(SimTime now) override {
    if (finished_) return;
    if (armed_ && now >= *armed_) armed_.reset();
    try {
      process(client_.on_timer(now), now);
      if (!finished_ && stage_ == Stage::AwaitCid && now >= cid_deadline_) migrate(now);
      if (!finished_ && stage_ == Stage::AwaitHttp && now >= http_deadline_) {
        finish(ErrorClass::ConnectionReset);
      }
    } catch (const Error&) {
      finish(ErrorClass::ProtocolViolation);
      return;
    }
    rearm();
  }

 private:
  enum class Stage { Handshake, AwaitCid, Probing, AwaitHttp };

  static ClientConfig client_config(const ScanConfig& c) {
    ClientConfig cc;
    cc.handshake_timeout = SimTime(c.handshake_timeout_ms);
    cc.path_timeout = SimTime(c.path_timeout_ms);
    cc.path_retries = c.path_retries;
    return cc;
  }

  SendStatus send(const Transmit& tx) {
    return transport_.send(tx.path.local, tx.path.remote, tx.datagram);
  }

  void process(const Output& out, SimTime now) {
    for (const auto& tx : out.transmits) send(tx);
    for (const auto& ev : out.events) {
      if (finished_) return;
      std::visit([&](const auto& e) { on_event(e, now); }, ev);
    }
  }

  void on_event(const event::HandshakeComplete&, SimTime now) {
    outcome_.handshake_ok = true;
    outcome_.timings_ms.handshake = static_cast<std::uint64_t>((now - started_).count());
    const auto& params = *client_.state().peer_params;
    outcome_.migration_disabled_param = params.disable_active_migration;
    if (params.disable_active_migration) {
      finish(ErrorClass::MigrationDisabled);
      return;
    }
    send(client_.issue_cid());
    stage_ = Stage::AwaitCid;
    cid_deadline_ = now + SimTime(config_.path_timeout_ms);
  }

  void on_event(const event::CidReceived&, SimTime now) {
    outcome_.server_issued_cid = true;
    if (stage_ == Stage::AwaitCid) migrate(now);
  }

  void on_event(const event::PathValidated&, SimTime now) {
    outcome_.migration_ok = true;
    outcome_.timings_ms.migration = static_cast<std::uint64_t>((now - migration_started_).count());
    if (config_.retire_after_migration) {
      if (auto tx = client_.retire_old()) send(*tx);
    }
    send(client_.http_get(config_.http_path));
    stage_ = Stage::AwaitHttp;
    http_started_ = now;
    http_deadline_ = now + SimTime(config_.handshake_timeout_ms);
  }

  void on_event(const event::PathValidationFailed&, SimTime) {
    finish(ErrorClass::PathValidationTimeout);
  }

  void on_event(const event::HttpDone& e, SimTime now) {
    outcome_.http_status = e.status;
    outcome_.server_header = e.server_header;
    outcome_.timings_ms.http = static_cast<std::uint64_t>((now - http_started_).count());
    finish(outcome_.migration_ok ? ErrorClass::None : ErrorClass::ProtocolViolation);
  }

  void on_event(const event::ClosedByPeer&, SimTime) {
    finish(outcome_.handshake_ok ? ErrorClass::ConnectionReset : ErrorClass::HandshakeRejected);
  }

  void on_event(const event::Timeout& e, SimTime) {
    if (e.what == TimeoutKind::Handshake) {
      finish(unreachable_ ? ErrorClass::UdpUnresponsive : ErrorClass::HandshakeTimeout);
    }
    // Path-validation expiry is reported by the PathValidationFailed that follows.
  }

  void migrate(SimTime now) {
    try {
      migration_started_ = now;
      send(client_.begin_migration(migration_local_, now));
      stage_ = Stage::Probing;
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::NoSpareCid: finish(ErrorClass::NoSpareCid); break;
        case ErrorCode::MigrationDisabled: finish(ErrorClass::MigrationDisabled); break;
        default: finish(ErrorClass::ProtocolViolation); break;
      }
    }
  }

  void rearm() {
    if (finished_) return;
    std::optional<SimTime> next = client_.next_timer();
    auto consider = [&](SimTime t) {
      if (!next || t < *next) next = t;
    };
    if (stage_ == Stage::AwaitCid) consider(cid_deadline_);
    if (stage_ == Stage::AwaitHttp) consider(http_deadline_);
    if (next && (!armed_ || *next < *armed_)) {
      transport_.schedule(*this, *next);
      armed_ = next;
    }
  }

  void release() {
    if (bound_) {
      bound_ = false;
      transport_.cancel_timers(*this);
      transport_.unbind(handshake_local_);
      transport_.unbind(migration_local_);
    }
  }

  void finish(ErrorClass cls) {
    if (finished_) return;
    finished_ = true;
    outcome_.error_class = cls;
    release();
    if (done_) done_(index_, outcome_);
  }

  const ScanConfig& config_;
  Transport& transport_;
  std::size_t index_;
  Done done_;
  ClientConnection client_;
  ScanOutcome outcome_;
  SocketAddr handshake_local_;
  SocketAddr migration_local_;
  Stage stage_ = Stage::Handshake;
  SimTime started_{0};
  SimTime migration_started_{0};
  SimTime http_started_{0};
  SimTime cid_deadline_{0};
  SimTime http_deadline_{0};
  std::optional<SimTime> armed_;
  bool unreachable_ = false;
  bool bound_ = false;
  bool finished_ = false;
};

class ScanRun final : public Receiver {
 public:
  ScanRun(std::span<const Target> targets, const ScanConfig& config, Transport& transport,
          const std::function<void(const ScanOutcome&)>& sink)
      : targets_(targets),
        config_(config),
        transport_(transport),
        sink_(sink),
        results_(targets.size()),
        skipped_(targets.size(), false),
        capacity_(std::uint64_t{config.rate_pps} * 1000),
        tokens_(capacity_) {}

  ~ScanRun() override {
    if (started_) transport_.cancel_timers(*this);
  }

  std::vector<ScanOutcome> run() {
    last_refill_ = transport_.now();
    started_ = true;
    pump(transport_.now());
    transport_.run_until_idle(SimTime::max());
    std::vector<ScanOutcome> out;
    for (std::size_t i = 0; i < results_.size(); ++i) {
      if (results_[i]) out.push_back(std::move(*results_[i]));
    }
    return out;
  }

  void on_datagram(const PathId&, ByteView, SimTime) override {}

  void on_timer(SimTime now) override {
    finished_sessions_.clear();
    timer_armed_ = false;
    pump(now);
  }

 private:
  void pump(SimTime now) {
    // Token bucket in milli-tokens: rate_pps tokens per second is rate_pps
    // milli-tokens per millisecond.
    tokens_ = std::min(capacity_, tokens_ + static_cast<std::uint64_t>((now - last_refill_).count()) *
                                                config_.rate_pps);
    last_refill_ = now;
    while (inflight_ < config_.max_inflight && next_ < targets_.size()) {
      if (config_.blocklist.contains(targets_[next_].ip)) {
        skipped_[next_++] = true;
        flush();
        continue;
      }
      if (tokens_ < 1000) {
        const auto wait = (1000 - tokens_ + config_.rate_pps - 1) / config_.rate_pps;
        if (!timer_armed_) {
          transport_.schedule(*this, now + SimTime(wait));
          timer_armed_ = true;
        }
        return;
      }
      tokens_ -= 1000;
      launch(next_++);
    }
  }

  void launch(std::size_t index) {
    ++inflight_;
    auto session = std::make_unique<Session>(
        targets_[index], config_, transport_, index,
        [this](std::size_t i, const ScanOutcome& o) { on_done(i, o); });
    auto* raw = session.get();
    sessions_.emplace(index, std::move(session));
    raw->start();
  }

  void on_done(std::size_t index, const ScanOutcome& outcome) {
    results_[index] = outcome;
    --inflight_;
    // The session is still on the call stack; destroy it on the next timer.
    auto it = sessions_.find(index);
    finished_sessions_.push_back(std::move(it->second));
    sessions_.erase(it);
    flush();
    if (!timer_armed_) {
      transport_.schedule(*this, transport_.now());
      timer_armed_ = true;
    }
  }

  void flush() {
    while (flushed_ < results_.size() && (results_[flushed_] || skipped_[flushed_])) {
      if (results_[flushed_] && sink_) sink_(*results_[flushed_]);
      ++flushed_;
    }
  }

  std::span<const Target> targets_;
  const ScanConfig& config_;
  Transport& transport_;
  const std::function<void(const ScanOutcome&)>& sink_;
  std::vector<std::optional<ScanOutcome>> results_;
  std::vector<bool> skipped_;
  std::map<std::size_t, std::unique_ptr<Session>> sessions_;
  std::vector<std::unique_ptr<Session>> finished_sessions_;
  std::size_t next_ = 0;
  std::size_t flushed_ = 0;
  std::uint32_t inflight_ = 0;
  std::uint64_t capacity_;
  std::uint64_t tokens_;
  SimTime last_refill_{0};
  bool started_ = false;
  bool timer_armed_ = false;
};

}  // namespace

std::string_view to_string(ErrorClass c) noexcept {
  switch (c) {
    case ErrorClass::None: return "None";
    case ErrorClass::UdpUnresponsive: return "UdpUnresponsive";
    case ErrorClass::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorClass::HandshakeRejected: return "HandshakeRejected";
    case ErrorClass::NoSpareCid: return "NoSpareCid";
    case ErrorClass::MigrationDisabled: return "MigrationDisabled";
    case ErrorClass::PathValidationTimeout: return "PathValidationTimeout";
    case ErrorClass::ConnectionReset: return "ConnectionReset";
    case ErrorClass::ProtocolViolation: return "ProtocolViolation";
  }
  return "?";
}

std::optional<ErrorClass> error_class_from_string(std::string_view s) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorClass::ProtocolViolation); ++i) {
    const auto c = static_cast<ErrorClass>(i);
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

bool ScanOutcome::consistent() const noexcept {
  if (server_issued_cid && !handshake_ok) return false;
  if (migration_ok && !(handshake_ok && server_issued_cid)) return false;
  if (migration_disabled_param && migration_ok) return false;
  const bool success = migration_ok && http_status.has_value();
  if ((error_class == ErrorClass::None) != success) return false;
  switch (error_class) {
    case ErrorClass::UdpUnresponsive:
    case ErrorClass::HandshakeTimeout:
    case ErrorClass::HandshakeRejected:
      return !handshake_ok;
    case ErrorClass::NoSpareCid:
      return handshake_ok && !server_issued_cid;
    case ErrorClass::MigrationDisabled:
      return handshake_ok && migration_disabled_param && !migration_ok;
    case ErrorClass::PathValidationTimeout:
      return server_issued_cid && !migration_ok;
    default:
      return true;
  }
}

void ScanConfig::validate() const {
  if (rate_pps == 0) throw Error(ErrorCode::InvalidArgument, "rate_pps must be > 0");
  if (max_inflight == 0) throw Error(ErrorCode::InvalidArgument, "max_inflight must be >= 1");
  if (handshake_timeout_ms == 0 || path_timeout_ms == 0) {
    throw Error(ErrorCode::InvalidArgument, "timeouts must be > 0");
  }
  if (base_port + 2 * 16384 > 65535) {
    throw Error(ErrorCode::InvalidArgument, "base_port leaves no room for session ports");
  }
}

ScanOutcome scan_target(const Target& target, const ScanConfig& config, Transport& transport,
                        std::size_t index) {
  config.validate();
  if (config.blocklist.contains(target.ip)) {
    throw Error(ErrorCode::Blocklisted, target.ip.to_string() + " is on the opt-out list");
  }
  Session session(target, config, transport, index, {});
  session.start();
  transport.run_until_idle(SimTime::max());
  return session.outcome();
}

std::vector<ScanOutcome> run_scan(std::span<const Target> targets, const ScanConfig& config,
                                  Transport& transport,
                                  const std::function<void(const ScanOutcome&)>& sink) {
  config.validate();
  if (targets.empty()) return {};
  ScanRun run(targets, config, transport, sink);
  return run.run();
}

}  // namespace qmig::scan
