#include "qmig/population.hpp"

#include <array>
#include <cctype>
#include <cmath>

#include "qmig/error.hpp"
#include "qmig/hash.hpp"

namespace qmig::sim {
namespace {

struct Provider {
  const char* name;
  std::uint32_t asn;
  unsigned weight;
  const char* header;
};

// Weights are relative shares of hosts. The last block has no announced
// prefix, so its hosts show up as UNKNOWN.
constexpr std::array<Provider, 9> kProviders{{
    {"Hostinger", 47583, 30, "LiteSpeed"},
    {"Cloudflare", 13335, 18, "cloudflare"},
    {"Amazon", 16509, 14, "AmazonS3"},
    {"Google", 15169, 12, "gws"},
    {"Akamai", 20940, 8, "AkamaiGHost"},
    {"OVH", 16276, 7, "nginx"},
    {"Hetzner", 24940, 5, "nginx"},
    {"DigitalOcean", 14061, 4, "Apache"},
    {"", 0, 2, "Caddy"},
}};

const Provider& pick_provider(std::uint64_t draw) {
  unsigned total = 0;
  for (const auto& p : kProviders) total += p.weight;
  auto at = static_cast<unsigned>(draw % total);
  for (const auto& p : kProviders) {
    if (at < p.weight) return p;
    at -= p.weight;
  }
  return kProviders.back();
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out.empty() ? "unrouted" : out;
}

// Provider k owns 10.k.0.0/16 and 2001:db8:k::/48; the unrouted block is
// 172.16.0.0/16. Every tenth host is IPv6.
IpAddress host_address(std::size_t provider, std::uint32_t serial) {
  const bool unrouted = kProviders[provider].asn == 0;
  if (serial % 10 == 9) {
    std::array<std::uint8_t, 16> o{0x20, 0x01, 0x0d, 0xb8};
    o[4] = 0;
    o[5] = static_cast<std::uint8_t>(unrouted ? 0xff : provider);
    o[12] = static_cast<std::uint8_t>(serial >> 24);
    o[13] = static_cast<std::uint8_t>(serial >> 16);
    o[14] = static_cast<std::uint8_t>(serial >> 8);
    o[15] = static_cast<std::uint8_t>(serial);
    return IpAddress::v6(o);
  }
  const std::uint32_t base = unrouted ? 0xAC100000u : (10u << 24) | (static_cast<std::uint32_t>(provider) << 16);
  // Skip .0 and .255 host parts for readability.
  const std::uint32_t slot = serial % 60000;
  return IpAddress::v4(base + (slot / 250) * 256 + slot % 250 + 1);
}

// The four ways a reachable server fails to migrate, in rotation.
void make_incapable(HostSpec& h, std::uint64_t draw) {
  switch (draw % 4) {
    case 0: h.behavior.issues_extra_cid = false; break;
    case 1: h.behavior.disable_active_migration = true; break;
    case 2: h.behavior.answers_path_challenge = false; break;
    default: h.impairments.firewall_blocks_new_paths = true; break;
  }
}

}  // namespace

void PopulationSpec::validate() const {
  if (!(capable_share >= 0.0 && capable_share <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "capable share must be in [0,1]");
  }
  if (!(unnamed_ratio >= 0.0) || !(silent_ratio >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "ratios must be >= 0");
  }
  if (population > 100000) throw Error(ErrorCode::InvalidArgument, "population too large");
}

Population build_population(const PopulationSpec& spec) {
  spec.validate();
  Population pop;
  pop.scenario.seed = spec.seed;
  for (std::size_t k = 0; k < kProviders.size(); ++k) {
    const auto& p = kProviders[k];
    if (p.asn == 0) continue;
    pop.orgs.emplace_back(p.asn, p.name);
    pop.prefixes.emplace_back(Prefix{IpAddress::v4((10u << 24) | (static_cast<std::uint32_t>(k) << 16)), 16}, p.asn);
    std::array<std::uint8_t, 16> o{0x20, 0x01, 0x0d, 0xb8, 0, static_cast<std::uint8_t>(k)};
    pop.prefixes.emplace_back(Prefix{IpAddress::v6(o), 48}, p.asn);
  }

  const auto unnamed = static_cast<std::uint32_t>(std::llround(spec.population * spec.unnamed_ratio));
  const auto silent = static_cast<std::uint32_t>(std::llround(spec.population * spec.silent_ratio));
  const std::uint32_t total = spec.population + unnamed + silent;
  std::array<std::uint32_t, kProviders.size()> serials{};

  for (std::uint32_t i = 0; i < total; ++i) {
    const Hasher h = Hasher(spec.seed).add(i);
    const auto& provider = pick_provider(Hasher(h).add(1).value());
    const auto k = static_cast<std::size_t>(&provider - kProviders.data());
    HostSpec host;
    host.ip = host_address(k, serials[k]++);
    host.behavior.http_server_header = provider.header;
    host.impairments.latency_ms = 5 + static_cast<std::uint32_t>(Hasher(h).add(2).value() % 40);
    host.impairments.seed = Hasher(h).add(3).value();
    if (i < spec.population) {
      host.domains.push_back("h" + std::to_string(i) + "." + slug(provider.name) + ".example");
      if (Hasher(h).add(4).unit() >= spec.capable_share) {
        make_incapable(host, Hasher(h).add(5).value());
        host.expect = host.behavior.issues_extra_cid == false       ? "NoSpareCid"
                      : host.behavior.disable_active_migration      ? "MigrationDisabled"
                                                                    : "PathValidationTimeout";
      } else {
        host.expect = "None";
      }
    } else if (i >= spec.population + unnamed) {
      host.quic = false;
    }
    pop.scenario.hosts.push_back(std::move(host));
  }
  return pop;
}

asmap::PrefixTable prefix_table(const Population& population) {
  asmap::PrefixTable t;
  for (const auto& [p, asn] : population.prefixes) t.insert(p, asn);
  return t;
}

asmap::OrgMap org_map(const Population& population) {
  asmap::OrgMap m;
  for (const auto& [asn, name] : population.orgs) m.set(asn, name);
  return m;
}

}  // namespace qmig::sim
