#pragma once

// Independent reference implementations the tests compare against. Kept
// deliberately naive.

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qmig/discovery.hpp"
#include "qmig/endpoint.hpp"
#include "qmig/netsim.hpp"
#include "qmig/scanner.hpp"

namespace qmig::testing {

// Longest containing prefix by brute force; for equal prefixes the entry
// listed last wins.
inline std::optional<std::uint32_t> linear_lpm(
    const std::vector<std::pair<Prefix, std::uint32_t>>& entries, const IpAddress& ip) {
  std::optional<std::uint32_t> best;
  int best_len = -1;
  for (const auto& [p, asn] : entries) {
    if (p.network.family() != ip.family()) continue;
    bool inside = true;
    for (unsigned i = 0; i < p.length && inside; ++i) inside = p.network.bit(i) == ip.bit(i);
    if (inside && static_cast<int>(p.length) >= best_len) {
      best_len = p.length;
      best = asn;
    }
  }
  return best;
}

// What the network let through to the client, per frame kind.
struct SessionFacts {
  bool close_delivered = false;
  bool server_hello_delivered = false;
  bool server_cid_delivered = false;
  bool path_response_delivered = false;
  bool http_response_delivered = false;
};

inline SessionFacts facts_from(const std::vector<sim::TraceRecord>& trace) {
  SessionFacts f;
  for (const auto& r : trace) {
    if (r.dir != sim::Direction::ServerToClient || r.fate != sim::Fate::Delivered) continue;
    for (const auto& frame : r.frames()) {
      if (std::holds_alternative<wire::ConnectionClose>(frame)) f.close_delivered = true;
      if (std::holds_alternative<wire::CryptoServerHello>(frame)) f.server_hello_delivered = true;
      if (std::holds_alternative<wire::NewConnectionId>(frame)) f.server_cid_delivered = true;
      if (std::holds_alternative<wire::PathResponse>(frame)) f.path_response_delivered = true;
      if (std::holds_alternative<wire::HttpResponse>(frame)) f.http_response_delivered = true;
    }
  }
  return f;
}

// The class a scan must report given the server's configuration and the
// fate of the datagrams it sent back.
inline scan::ErrorClass class_from_facts(const ServerBehavior& b, bool sni_sent,
                                         const SessionFacts& f) {
  using scan::ErrorClass;
  if (b.requires_sni && !sni_sent) {
    return f.close_delivered ? ErrorClass::HandshakeRejected : ErrorClass::HandshakeTimeout;
  }
  if (!f.server_hello_delivered) return ErrorClass::HandshakeTimeout;
  if (b.disable_active_migration) return ErrorClass::MigrationDisabled;
  if (!f.server_cid_delivered) return ErrorClass::NoSpareCid;
  if (!f.path_response_delivered) return ErrorClass::PathValidationTimeout;
  if (!f.http_response_delivered) return ErrorClass::ConnectionReset;
  return ErrorClass::None;
}

// Lossless networks without a load balancer.
inline scan::ErrorClass class_table(const ServerBehavior& b, bool firewall, bool sni_sent) {
  using scan::ErrorClass;
  if (b.requires_sni && !sni_sent) return ErrorClass::HandshakeRejected;
  if (b.disable_active_migration) return ErrorClass::MigrationDisabled;
  if (!b.issues_extra_cid) return ErrorClass::NoSpareCid;
  if (!b.answers_path_challenge || firewall) return ErrorClass::PathValidationTimeout;
  return ErrorClass::None;
}

// Two passes over raw (domain, ip) rows: collect addresses, then rescan for
// each address.
inline discovery::DomainMap naive_domain_join(
    const std::vector<std::pair<std::string, std::string>>& rows) {
  std::set<std::string> ips;
  for (const auto& r : rows) ips.insert(r.second);
  discovery::DomainMap out;
  for (const auto& ip : ips) {
    std::set<std::string> names;
    for (const auto& r : rows) {
      if (r.second != ip) continue;
      std::string lower;
      for (char c : r.first) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      names.insert(lower);
    }
    out[IpAddress::parse(ip)] = {names.begin(), names.end()};
  }
  return out;
}

struct GroupCounts {
  std::uint64_t targets = 0;
  std::uint64_t handshakes = 0;
  std::uint64_t migrations = 0;
  friend bool operator==(const GroupCounts&, const GroupCounts&) = default;
};

inline std::map<std::string, GroupCounts> group_by_org(
    const std::vector<scan::ScanOutcome>& outcomes,
    const std::vector<std::pair<Prefix, std::uint32_t>>& prefixes,
    const std::map<std::uint32_t, std::string>& names) {
  std::map<std::string, GroupCounts> out;
  for (const auto& o : outcomes) {
    const auto asn = linear_lpm(prefixes, o.target.ip);
    std::string org = "UNKNOWN";
    if (asn) {
      auto it = names.find(*asn);
      org = it != names.end() ? it->second : "AS" + std::to_string(*asn);
    }
    auto& g = out[org];
    ++g.targets;
    g.handshakes += o.handshake_ok;
    g.migrations += o.migration_ok;
  }
  return out;
}

inline std::map<std::string, std::uint64_t> count_headers(
    const std::vector<scan::ScanOutcome>& outcomes) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& o : outcomes) {
    if (o.migration_ok && o.server_header) ++out[*o.server_header];
  }
  return out;
}

}  // namespace qmig::testing
