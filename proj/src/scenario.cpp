#include "qmig/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qmig/error.hpp"
#include "text_util.hpp"

namespace qmig::sim {
namespace {

using nlohmann::json;

struct Reader {
  std::string_view source;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source, 1, what); }

  template <typename T>
  T get(const json& obj, const char* key, T fallback) const {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      fail(std::string("bad value for \"") + key + "\"");
    }
  }
};

HostSpec read_host(const json& h, const Reader& r) {
  if (!h.is_object()) r.fail("host entries must be objects");
  HostSpec spec;
  const auto ip_text = r.get<std::string>(h, "ip", "");
  auto ip = IpAddress::try_parse(ip_text);
  if (!ip) r.fail("host has invalid ip \"" + ip_text + "\"");
  spec.ip = *ip;
  spec.quic = r.get(h, "quic", true);
  spec.domains = r.get(h, "domains", std::vector<std::string>{});
  if (auto it = h.find("expect"); it != h.end() && !it->is_null()) {
    spec.expect = r.get<std::string>(h, "expect", "");
  }

  const json empty = json::object();
  const auto& b = h.contains("behavior") ? h["behavior"] : empty;
  ServerBehavior d;
  auto& sb = spec.behavior;
  sb.requires_sni = r.get(b, "requires_sni", d.requires_sni);
  sb.issues_extra_cid = r.get(b, "issues_extra_cid", d.issues_extra_cid);
  sb.disable_active_migration = r.get(b, "disable_active_migration", d.disable_active_migration);
  sb.answers_path_challenge = r.get(b, "answers_path_challenge", d.answers_path_challenge);
  sb.http_server_header = r.get(b, "http_server_header", d.http_server_header);
  sb.alpn_allowlist = r.get(b, "alpn", d.alpn_allowlist);
  sb.supported_versions = r.get(b, "versions", d.supported_versions);
  sb.active_cid_limit = r.get(b, "active_cid_limit", d.active_cid_limit);

  const auto& i = h.contains("impairments") ? h["impairments"] : empty;
  Impairments di;
  auto& im = spec.impairments;
  im.loss_rate = r.get(i, "loss_rate", di.loss_rate);
  im.latency_ms = r.get(i, "latency_ms", di.latency_ms);
  im.firewall_blocks_new_paths = r.get(i, "firewall_blocks_new_paths", di.firewall_blocks_new_paths);
  im.lb_backend_count = r.get(i, "lb_backend_count", di.lb_backend_count);
  im.seed = r.get(i, "seed", di.seed);
  try {
    im.validate();
  } catch (const Error& e) {
    r.fail(std::string(ip_text) + ": " + e.what());
  }
  return spec;
}

}  // namespace

Scenario parse_scenario(std::string_view text, std::string_view source) {
  Reader r{source};
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    r.fail(e.what());
  }
  if (!doc.is_object()) r.fail("scenario must be a JSON object");
  Scenario s;
  s.seed = r.get<std::uint64_t>(doc, "seed", 0);
  auto hosts = doc.find("hosts");
  if (hosts == doc.end()) return s;
  if (!hosts->is_array()) r.fail("\"hosts\" must be an array");
  for (const auto& h : *hosts) s.hosts.push_back(read_host(h, r));
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

std::string scenario_to_json(const Scenario& scenario) {
  nlohmann::ordered_json hosts = nlohmann::ordered_json::array();
  for (const auto& h : scenario.hosts) {
    const auto& b = h.behavior;
    const auto& i = h.impairments;
    nlohmann::ordered_json j;
    j["ip"] = h.ip.to_string();
    j["quic"] = h.quic;
    if (!h.domains.empty()) j["domains"] = h.domains;
    j["behavior"] = {{"requires_sni", b.requires_sni},
                     {"issues_extra_cid", b.issues_extra_cid},
                     {"disable_active_migration", b.disable_active_migration},
                     {"answers_path_challenge", b.answers_path_challenge},
                     {"http_server_header", b.http_server_header},
                     {"alpn", b.alpn_allowlist},
                     {"versions", b.supported_versions},
                     {"active_cid_limit", b.active_cid_limit}};
    j["impairments"] = {{"loss_rate", i.loss_rate},
                        {"latency_ms", i.latency_ms},
                        {"firewall_blocks_new_paths", i.firewall_blocks_new_paths},
                        {"lb_backend_count", i.lb_backend_count},
                        {"seed", i.seed}};
    if (h.expect) j["expect"] = *h.expect;
    hosts.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["seed"] = scenario.seed;
  doc["hosts"] = std::move(hosts);
  return doc.dump(1) + "\n";
}

void populate(World& world, const Scenario& scenario) {
  for (const auto& h : scenario.hosts) {
    if (h.quic) world.add_server(h.ip, h.behavior, h.impairments);
  }
}

discovery::DomainMap domain_map(const Scenario& scenario) {
  std::vector<discovery::DomainRecord> records;
  for (const auto& h : scenario.hosts) {
    for (const auto& d : h.domains) records.push_back({d, {h.ip}});
  }
  return discovery::index_domains(records);
}

std::vector<IpAddress> addresses(const Scenario& scenario) {
  std::vector<IpAddress> out;
  for (const auto& h : scenario.hosts) out.push_back(h.ip);
  return out;
}

}  // namespace qmig::sim
