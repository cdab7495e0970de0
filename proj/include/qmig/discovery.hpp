#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmig/net.hpp"
#include "qmig/prefix_trie.hpp"
#include "qmig/transport.hpp"

namespace qmig::discovery {

struct Target {
  IpAddress ip;
  std::uint16_t port = 443;
  std::vector<std::string> snis;  // lowercase, sorted, unique

  Target() = default;
  Target(IpAddress ip, std::uint16_t port, std::vector<std::string> snis = {});

  // The name used in the handshake: first in sorted order.
  std::optional<std::string> primary_sni() const;
  SocketAddr addr() const { return SocketAddr{ip, port}; }
  friend bool operator==(const Target&, const Target&) = default;
};

struct DomainRecord {
  std::string domain;
  std::vector<IpAddress> addresses;
};

// address -> domains (lowercase, sorted, unique)
using DomainMap = std::map<IpAddress, std::vector<std::string>>;

bool is_valid_domain(std::string_view name);

// CSV lines `domain,ip`. Throws ParseError with the failing line.
DomainMap load_domain_map(const std::filesystem::path& path);
DomainMap index_domains(std::span<const DomainRecord> records);

struct AddressEntry {
  IpAddress ip;
  std::optional<std::uint16_t> port;
};
// One address per line, optionally `,port`.
std::vector<AddressEntry> load_address_list(const std::filesystem::path& path);
// One CIDR per line, '#' comments.
PrefixSet load_blocklist(const std::filesystem::path& path);

struct ProbeOptions {
  SocketAddr local_v4{IpAddress::parse("198.51.100.10"), 40000};
  SocketAddr local_v6{IpAddress::parse("2001:db8:ffff::10"), 40000};
  // Replies are collected until this long after the last probe.
  SimTime reply_window{2000};
  std::uint64_t seed = 0;
};

struct Responsive {
  SocketAddr addr;
  std::vector<std::uint32_t> versions;
  friend bool operator==(const Responsive&, const Responsive&) = default;
};

// Sends one forced-version-negotiation probe per non-blocklisted address,
// paced so that probe k (1-based) leaves ceil(k * 1000 / rate_pps) ms after
// the start. Returns responders in input order.
std::vector<Responsive> probe_responsive(std::span<const SocketAddr> targets,
                                         std::uint32_t rate_pps, const PrefixSet& blocklist,
                                         Transport& transport, const ProbeOptions& options = {});
std::vector<Responsive> probe_responsive(std::span<const IpAddress> addresses, std::uint16_t port,
                                         std::uint32_t rate_pps, const PrefixSet& blocklist,
                                         Transport& transport, const ProbeOptions& options = {});

// CSV `ip,port,versions` with versions as 0x%08x joined by ';'.
void write_responsive(std::span<const Responsive> rows, std::ostream& out);
std::vector<Responsive> load_responsive(const std::filesystem::path& path);

enum class SniMode { WithSni, NoSni };

// WithSni keeps mapped addresses only; NoSni keeps all with no names.
// Output is unique and sorted by address.
std::vector<Target> build_targets(std::span<const IpAddress> responsive, const DomainMap& domains,
                                  SniMode mode, std::uint16_t port = 443);

}  // namespace qmig::discovery
