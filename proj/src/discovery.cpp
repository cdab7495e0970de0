#include "qmig/discovery.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ostream>
#include <random>
#include <set>

#include "qmig/error.hpp"
#include "qmig/wire.hpp"
#include "text_util.hpp"

namespace qmig::discovery {
namespace {

void normalize(std::vector<std::string>& names) {
  for (auto& n : names) n = detail::lowercase(n);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
}

std::optional<std::uint16_t> parse_port(std::string_view s) {
  unsigned v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || v > 65535) return std::nullopt;
  return static_cast<std::uint16_t>(v);
}

class Prober final : public Receiver {
 public:
  Prober(std::vector<SocketAddr> targets, std::uint32_t rate_pps, Transport& transport,
         const ProbeOptions& options)
      : targets_(std::move(targets)),
        rate_pps_(rate_pps),
        transport_(transport),
        options_(options),
        rng_(options.seed),
        replies_(targets_.size()) {
    for (const auto& t : targets_) {
      scids_.push_back(wire::ConnectionId::random(rng_));
      index_.emplace(t, scids_.size() - 1);
    }
  }

  ~Prober() override { close_sockets(); }

  std::vector<Responsive> run() {
    transport_.bind(options_.local_v4, *this);
    transport_.bind(options_.local_v6, *this);
    bound_ = true;
    start_ = transport_.now();
    if (targets_.empty()) {
      close_sockets();
      return {};
    }
    transport_.schedule(*this, slot(0));
    transport_.run_until_idle(SimTime::max());
    close_sockets();

    std::vector<Responsive> out;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      if (replies_[i]) out.push_back(Responsive{targets_[i], *replies_[i]});
    }
    return out;
  }

  void on_timer(SimTime now) override {
    while (next_ < targets_.size() && slot(next_) <= now) send_probe(next_++);
    if (next_ < targets_.size()) {
      transport_.schedule(*this, slot(next_));
    } else if (!closing_) {
      closing_ = true;
      transport_.schedule(*this, now + options_.reply_window);
    } else {
      close_sockets();
    }
  }

  void on_datagram(const PathId& path, ByteView datagram, SimTime) override {
    auto it = index_.find(path.remote);
    if (it == index_.end() || replies_[it->second]) return;
    try {
      replies_[it->second] = wire::parse_version_negotiation(datagram, scids_[it->second]);
    } catch (const Error&) {
      // Not a Version Negotiation for our probe.
    }
  }

 private:
  // Probe k (0-based) leaves at ceil((k + 1) * 1000 / rate) ms.
  SimTime slot(std::size_t k) const {
    const std::uint64_t num = (k + 1) * 1000ull;
    return start_ + SimTime((num + rate_pps_ - 1) / rate_pps_);
  }

  void send_probe(std::size_t k) {
    const auto& to = targets_[k];
    const auto dcid = wire::ConnectionId::random(rng_);
    const auto& from = to.ip.is_v4() ? options_.local_v4 : options_.local_v6;
    transport_.send(from, to, wire::encode_probe(wire::kForcedVersion, dcid, scids_[k]));
  }

  void close_sockets() {
    if (!bound_) return;
    bound_ = false;
    transport_.cancel_timers(*this);
    transport_.unbind(options_.local_v4);
    transport_.unbind(options_.local_v6);
  }

  std::vector<SocketAddr> targets_;
  std::uint32_t rate_pps_;
  Transport& transport_;
  ProbeOptions options_;
  std::mt19937_64 rng_;
  std::vector<wire::ConnectionId> scids_;
  std::map<SocketAddr, std::size_t> index_;
  std::vector<std::optional<std::vector<std::uint32_t>>> replies_;
  std::size_t next_ = 0;
  SimTime start_{0};
  bool closing_ = false;
  bool bound_ = false;
};

}  // namespace

Target::Target(IpAddress ip_, std::uint16_t port_, std::vector<std::string> snis_)
    : ip(ip_), port(port_), snis(std::move(snis_)) {
  normalize(snis);
}

std::optional<std::string> Target::primary_sni() const {
  if (snis.empty()) return std::nullopt;
  return snis.front();
}

bool is_valid_domain(std::string_view name) {
  if (!name.empty() && name.back() == '.') name.remove_suffix(1);
  if (name.empty() || name.size() > 253) return false;
  for (auto label : detail::split(name, '.')) {
    if (label.empty() || label.size() > 63) return false;
    if (label.front() == '-' || label.back() == '-') return false;
    for (char c : label) {
      const auto u = static_cast<unsigned char>(c);
      if (!std::isalnum(u) && c != '-' && c != '_') return false;
    }
  }
  return true;
}

DomainMap index_domains(std::span<const DomainRecord> records) {
  DomainMap out;
  for (const auto& rec : records) {
    for (const auto& ip : rec.addresses) out[ip].push_back(rec.domain);
  }
  for (auto& [ip, names] : out) normalize(names);
  return out;
}

DomainMap load_domain_map(const std::filesystem::path& path) {
  DomainMap out;
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    const auto fields = detail::split(text, ',');
    if (fields.size() != 2) throw ParseError(path.string(), line, "expected domain,ip");
    const auto domain = detail::trim(fields[0]);
    if (!is_valid_domain(domain)) {
      throw ParseError(path.string(), line, "invalid domain '" + std::string(domain) + "'");
    }
    auto ip = IpAddress::try_parse(detail::trim(fields[1]));
    if (!ip) throw ParseError(path.string(), line, "invalid address");
    std::string name(domain);
    if (name.back() == '.') name.pop_back();
    out[*ip].push_back(std::move(name));
  });
  for (auto& [ip, names] : out) normalize(names);
  return out;
}

std::vector<AddressEntry> load_address_list(const std::filesystem::path& path) {
  std::vector<AddressEntry> out;
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    const auto fields = detail::split(text, ',');
    if (fields.size() > 2) throw ParseError(path.string(), line, "expected ip[,port]");
    auto ip = IpAddress::try_parse(detail::trim(fields[0]));
    if (!ip) throw ParseError(path.string(), line, "invalid address");
    AddressEntry e{*ip, std::nullopt};
    if (fields.size() == 2) {
      e.port = parse_port(detail::trim(fields[1]));
      if (!e.port) throw ParseError(path.string(), line, "invalid port");
    }
    out.push_back(e);
  });
  return out;
}

PrefixSet load_blocklist(const std::filesystem::path& path) {
  PrefixSet out;
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    const auto hash = text.find('#');
    auto p = Prefix::try_parse(detail::trim(text.substr(0, hash)));
    if (!p) throw ParseError(path.string(), line, "invalid CIDR");
    out.add(*p);
  });
  return out;
}

std::vector<Responsive> probe_responsive(std::span<const SocketAddr> targets,
                                         std::uint32_t rate_pps, const PrefixSet& blocklist,
                                         Transport& transport, const ProbeOptions& options) {
  if (rate_pps == 0) throw Error(ErrorCode::InvalidArgument, "rate_pps must be > 0");
  std::vector<SocketAddr> allowed;
  std::set<SocketAddr> seen;
  for (const auto& t : targets) {
    if (blocklist.contains(t.ip) || !seen.insert(t).second) continue;
    allowed.push_back(t);
  }
  Prober prober(std::move(allowed), rate_pps, transport, options);
  return prober.run();
}

std::vector<Responsive> probe_responsive(std::span<const IpAddress> addresses, std::uint16_t port,
                                         std::uint32_t rate_pps, const PrefixSet& blocklist,
                                         Transport& transport, const ProbeOptions& options) {
  std::vector<SocketAddr> targets;
  targets.reserve(addresses.size());
  for (const auto& ip : addresses) targets.push_back(SocketAddr{ip, port});
  return probe_responsive(targets, rate_pps, blocklist, transport, options);
}

void write_responsive(std::span<const Responsive> rows, std::ostream& out) {
  out << "ip,port,versions\n";
  for (const auto& r : rows) {
    out << r.addr.ip.to_string() << ',' << r.addr.port << ',';
    for (std::size_t i = 0; i < r.versions.size(); ++i) {
      char buf[12];
      std::snprintf(buf, sizeof(buf), "0x%08x", r.versions[i]);
      out << (i ? ";" : "") << buf;
    }
    out << '\n';
  }
}

std::vector<Responsive> load_responsive(const std::filesystem::path& path) {
  std::vector<Responsive> out;
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    if (text.rfind("ip,", 0) == 0) return;  // header
    const auto fields = detail::split(text, ',');
    if (fields.size() != 3) throw ParseError(path.string(), line, "expected ip,port,versions");
    auto ip = IpAddress::try_parse(fields[0]);
    auto port = parse_port(fields[1]);
    if (!ip || !port) throw ParseError(path.string(), line, "invalid address or port");
    Responsive r{SocketAddr{*ip, *port}, {}};
    if (!fields[2].empty()) {
      for (auto v : detail::split(fields[2], ';')) {
        if (v.rfind("0x", 0) == 0) v.remove_prefix(2);
        std::uint32_t version = 0;
        auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), version, 16);
        if (ec != std::errc() || end != v.data() + v.size()) {
          throw ParseError(path.string(), line, "invalid version");
        }
        r.versions.push_back(version);
      }
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<Target> build_targets(std::span<const IpAddress> responsive, const DomainMap& domains,
                                  SniMode mode, std::uint16_t port) {
  std::set<IpAddress> unique(responsive.begin(), responsive.end());
  std::vector<Target> out;
  for (const auto& ip : unique) {
    if (mode == SniMode::NoSni) {
      out.emplace_back(ip, port);
      continue;
    }
    if (auto it = domains.find(ip); it != domains.end() && !it->second.empty()) {
      out.emplace_back(ip, port, it->second);
    }
  }
  return out;
}

}  // namespace qmig::discovery
