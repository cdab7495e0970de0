#pragma once

// Synthetic internet for demonstrations: a handful of providers, each with
// its own prefix and ASN, hosting servers of which a planted share supports
// migration end to end.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qmig/asmap.hpp"
#include "qmig/scenario.hpp"

namespace qmig::sim {

struct PopulationSpec {
  // Hosts that answer QUIC and have a domain name.
  std::uint32_t population = 1000;
  // Probability that one of them completes handshake, migration and HTTP.
  double capable_share = 0.52;
  // Extra hosts per mapped host that answer QUIC but have no name.
  double unnamed_ratio = 0.2;
  // Extra addresses per mapped host that never answer.
  double silent_ratio = 0.1;
  std::uint64_t seed = 0;

  // Throws Error(InvalidArgument).
  void validate() const;
};

struct Population {
  Scenario scenario;  // every address, silent ones with quic=false
  std::vector<std::pair<Prefix, std::uint32_t>> prefixes;
  std::vector<std::pair<std::uint32_t, std::string>> orgs;
};

Population build_population(const PopulationSpec& spec);

asmap::PrefixTable prefix_table(const Population& population);
asmap::OrgMap org_map(const Population& population);

}  // namespace qmig::sim
