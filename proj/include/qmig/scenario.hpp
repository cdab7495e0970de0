#pragma once

// Synthetic-internet description shared by fixtures, the CLI and the demo.
//
//   {"seed": 7,
//    "hosts": [{"ip": "192.0.2.1", "quic": true,
//               "domains": ["a.example"],
//               "behavior": {"requires_sni": false, "issues_extra_cid": true,
//                            "disable_active_migration": false,
//                            "answers_path_challenge": true,
//                            "http_server_header": "nginx", "alpn": ["h3"],
//                            "versions": [1], "active_cid_limit": 4},
//               "impairments": {"loss_rate": 0, "latency_ms": 10,
//                               "firewall_blocks_new_paths": false,
//                               "lb_backend_count": 1, "seed": 0},
//               "expect": "None"}]}
//
// Every key except "ip" is optional and defaults as in ServerBehavior and
// Impairments. Hosts with "quic": false are absent from the network.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qmig/discovery.hpp"
#include "qmig/netsim.hpp"

namespace qmig::sim {

struct HostSpec {
  IpAddress ip;
  bool quic = true;
  std::vector<std::string> domains;
  ServerBehavior behavior;
  Impairments impairments;
  // Expected scan error_class name, for fixtures.
  std::optional<std::string> expect;
};

struct Scenario {
  std::uint64_t seed = 0;
  std::vector<HostSpec> hosts;
};

// Throws ParseError (line 1 for structural errors) or Error(IoError).
Scenario parse_scenario(std::string_view text, std::string_view source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

// Adds every QUIC host to `world`.
void populate(World& world, const Scenario& scenario);
discovery::DomainMap domain_map(const Scenario& scenario);
std::vector<IpAddress> addresses(const Scenario& scenario);

}  // namespace qmig::sim
