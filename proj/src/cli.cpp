#include "qmig/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmig/asmap.hpp"
#include "qmig/discovery.hpp"
#include "qmig/error.hpp"
#include "qmig/netsim.hpp"
#include "qmig/population.hpp"
#include "qmig/scanner.hpp"
#include "qmig/scenario.hpp"

namespace qmig::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  return to_hex(ByteView(digest, len));
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Global {
  std::uint64_t seed = 0;
  std::string blocklist;
  std::string manifest_out;
};

class Manifest {
 public:
  Manifest(std::string_view command, const Global& g) {
    doc_["command"] = std::string(command);
    doc_["started_at"] = utc_now();
    doc_["seed"] = g.seed;
    doc_["config"] = Json::object();
    doc_["datasets"] = Json::object();
    doc_["counts"] = Json::object();
  }

  Json& config() { return doc_["config"]; }
  void dataset(const fs::path& p) { doc_["datasets"][p.string()] = sha256_file(p); }
  void count(const char* stage, std::uint64_t n) { doc_["counts"][stage] = n; }

  void write(const fs::path& p) const {
    std::ofstream out(p);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  Json doc_;
};

fs::path manifest_path(const Global& g, const std::string& out) {
  if (!g.manifest_out.empty()) return g.manifest_out;
  if (!out.empty() && out != "-") return out + ".manifest.json";
  return {};
}

// Writes to `path`, or to `fallback` when the path is empty or "-".
template <typename F>
void emit(const std::string& path, std::ostream& fallback, F&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + path);
  fn(file);
  if (!file) throw Error(ErrorCode::IoError, "write failed: " + path);
}

void write_file(const fs::path& path, std::string_view text) {
  emit(path.string(), std::cout, [&](std::ostream& o) { o << text; });
}

PrefixSet load_blocklist(const Global& g, Manifest& m) {
  if (g.blocklist.empty()) return {};
  m.dataset(g.blocklist);
  m.config()["blocklist"] = g.blocklist;
  return discovery::load_blocklist(g.blocklist);
}

void write_trace(const sim::World& world, const std::string& path) {
  if (path.empty()) return;
  emit(path, std::cout, [&](std::ostream& o) { sim::write_trace_jsonl(world.trace(), o); });
}

std::vector<IpAddress> ips_of(std::span<const discovery::Responsive> rows) {
  std::vector<IpAddress> out;
  for (const auto& r : rows) out.push_back(r.addr.ip);
  return out;
}

// ---- probe ----------------------------------------------------------------

struct ProbeArgs {
  std::string world;
  std::string addresses;
  std::uint16_t port = 443;
  std::uint32_t rate = 1000;
  std::string out;
  std::string trace_out;
};

int cmd_probe(const ProbeArgs& a, const Global& g, std::ostream& out) {
  Manifest m("probe", g);
  m.config() = {{"world", a.world}, {"addresses", a.addresses}, {"port", a.port}, {"rate_pps", a.rate}};
  const auto block = load_blocklist(g, m);
  const auto scenario = sim::load_scenario(a.world);
  m.dataset(a.world);

  std::vector<SocketAddr> targets;
  if (!a.addresses.empty()) {
    m.dataset(a.addresses);
    for (const auto& e : discovery::load_address_list(a.addresses)) {
      targets.push_back(SocketAddr{e.ip, e.port.value_or(a.port)});
    }
  } else {
    for (const auto& ip : sim::addresses(scenario)) targets.push_back(SocketAddr{ip, a.port});
  }

  sim::World world(scenario.seed ^ g.seed);
  world.set_record_trace(!a.trace_out.empty());
  sim::populate(world, scenario);
  discovery::ProbeOptions opts;
  opts.seed = g.seed;
  const auto responsive = discovery::probe_responsive(targets, a.rate, block, world, opts);
  emit(a.out, out, [&](std::ostream& o) { discovery::write_responsive(responsive, o); });
  write_trace(world, a.trace_out);

  m.count("addresses", targets.size());
  m.count("responsive", responsive.size());
  if (auto p = manifest_path(g, a.out); !p.empty()) m.write(p);
  return kExitOk;
}

// ---- scan -----------------------------------------------------------------

struct ScanArgs {
  std::string world;
  std::string responsive;
  std::string addresses;
  std::string domains;
  std::string mode = "with-sni";
  std::string format;
  std::string out;
  std::string trace_out;
  std::string transport = "sim";
  std::uint16_t port = 443;
  scan::ScanConfig config;
  bool no_retire = false;
};

int cmd_scan(ScanArgs a, const Global& g, std::ostream& out) {
  if (a.transport == "real") {
    RealTransport real;
    real.now();  // throws TransportUnavailable
  }
  if (a.world.empty()) throw Error(ErrorCode::InvalidArgument, "--world is required with --transport sim");

  Manifest m("scan", g);
  auto& cfg = a.config;
  cfg.seed = g.seed;
  cfg.retire_after_migration = !a.no_retire;
  cfg.blocklist = load_blocklist(g, m);
  cfg.validate();
  m.config() = {{"world", a.world},
                {"responsive", a.responsive},
                {"addresses", a.addresses},
                {"domains", a.domains},
                {"mode", a.mode},
                {"port", a.port},
                {"transport", a.transport},
                {"rate_pps", cfg.rate_pps},
                {"max_inflight", cfg.max_inflight},
                {"handshake_timeout_ms", cfg.handshake_timeout_ms},
                {"path_timeout_ms", cfg.path_timeout_ms},
                {"path_retries", cfg.path_retries},
                {"retire_after_migration", cfg.retire_after_migration},
                {"http_path", cfg.http_path},
                {"base_port", cfg.base_port}};

  const auto scenario = sim::load_scenario(a.world);
  m.dataset(a.world);

  std::vector<IpAddress> ips;
  if (!a.responsive.empty()) {
    m.dataset(a.responsive);
    ips = ips_of(discovery::load_responsive(a.responsive));
  } else if (!a.addresses.empty()) {
    m.dataset(a.addresses);
    for (const auto& e : discovery::load_address_list(a.addresses)) ips.push_back(e.ip);
  } else {
    ips = sim::addresses(scenario);
  }

  discovery::DomainMap domains;
  if (!a.domains.empty()) {
    m.dataset(a.domains);
    domains = discovery::load_domain_map(a.domains);
  } else {
    domains = sim::domain_map(scenario);
  }
  const auto mode = a.mode == "no-sni" ? discovery::SniMode::NoSni : discovery::SniMode::WithSni;
  const auto targets = discovery::build_targets(ips, domains, mode, a.port);

  const auto format = a.format == "csv"     ? scan::ResultFormat::Csv
                      : a.format == "jsonl" ? scan::ResultFormat::Jsonl
                      : (a.out.empty() || a.out == "-") ? scan::ResultFormat::Jsonl
                                                        : scan::format_for(a.out);

  sim::World world(scenario.seed ^ g.seed);
  world.set_record_trace(!a.trace_out.empty());
  sim::populate(world, scenario);

  std::uint64_t handshakes = 0, migrations = 0, failures = 0, scanned = 0;
  emit(a.out, out, [&](std::ostream& o) {
    scan::write_header(o, format);
    scan::run_scan(targets, cfg, world, [&](const scan::ScanOutcome& r) {
      scan::write_record(o, r, format);
      ++scanned;
      handshakes += r.handshake_ok;
      migrations += r.migration_ok;
      failures += r.error_class != scan::ErrorClass::None;
    });
  });
  write_trace(world, a.trace_out);

  m.count("addresses", ips.size());
  m.count("targets", targets.size());
  m.count("scanned", scanned);
  m.count("handshakes", handshakes);
  m.count("migrations", migrations);
  m.count("failures", failures);
  if (auto p = manifest_path(g, a.out); !p.empty()) m.write(p);
  return failures ? kExitScanFailures : kExitOk;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::string results;
  std::string prefixes;
  std::string orgs;
  std::uint32_t top_n = 3;
  std::string format = "text";
  std::string label = "scan";
  std::string out;
};

int cmd_report(const ReportArgs& a, const Global& g, std::ostream& out) {
  Manifest m("report", g);
  m.config() = {{"results", a.results}, {"prefixes", a.prefixes}, {"orgs", a.orgs},
                {"top_n", a.top_n},     {"format", a.format},     {"label", a.label}};
  const auto outcomes = scan::read_results(a.results, scan::format_for(a.results));
  m.dataset(a.results);
  asmap::PrefixTable table;
  if (!a.prefixes.empty()) {
    table = asmap::load_prefix_table(a.prefixes);
    m.dataset(a.prefixes);
  }
  asmap::OrgMap orgs;
  if (!a.orgs.empty()) {
    orgs = asmap::load_org_map(a.orgs);
    m.dataset(a.orgs);
  }
  const auto report = asmap::aggregate(outcomes, table, orgs, a.top_n, a.label);
  const auto text = asmap::render_report(report, *asmap::report_format_from_string(a.format));
  emit(a.out, out, [&](std::ostream& o) { o << text; });

  m.count("outcomes", outcomes.size());
  m.count("prefixes", table.lines_loaded());
  m.count("handshakes", report.handshakes);
  m.count("migrations", report.migrations);
  if (auto p = manifest_path(g, a.out); !p.empty()) m.write(p);
  return kExitOk;
}

// ---- demo -----------------------------------------------------------------

struct DemoArgs {
  sim::PopulationSpec spec;
  std::uint32_t probe_rate = 10000;
  std::uint32_t scan_rate = 100;
  std::uint32_t top_n = 3;
  std::string format = "text";
  std::string out_dir;
};

int cmd_demo(DemoArgs a, const Global& g, std::ostream& out) {
  Manifest m("demo", g);
  a.spec.seed = g.seed;
  m.config() = {{"population", a.spec.population},
                {"capable_share", a.spec.capable_share},
                {"unnamed_ratio", a.spec.unnamed_ratio},
                {"silent_ratio", a.spec.silent_ratio},
                {"probe_rate_pps", a.probe_rate},
                {"scan_rate_pps", a.scan_rate},
                {"top_n", a.top_n}};
  const auto block = load_blocklist(g, m);
  const auto pop = sim::build_population(a.spec);

  sim::World world(g.seed);
  world.set_record_trace(false);
  sim::populate(world, pop.scenario);

  const auto all = sim::addresses(pop.scenario);
  discovery::ProbeOptions popts;
  popts.seed = g.seed;
  const auto responsive = discovery::probe_responsive(all, 443, a.probe_rate, block, world, popts);
  const auto domains = sim::domain_map(pop.scenario);
  const auto targets = discovery::build_targets(ips_of(responsive), domains, discovery::SniMode::WithSni);

  scan::ScanConfig cfg;
  cfg.seed = g.seed;
  cfg.rate_pps = a.scan_rate;
  cfg.blocklist = block;
  const auto outcomes = scan::run_scan(targets, cfg, world);

  const auto table = sim::prefix_table(pop);
  const auto orgs = sim::org_map(pop);
  std::vector<scan::ScanOutcome> v4, v6;
  for (const auto& o : outcomes) (o.target.ip.is_v4() ? v4 : v6).push_back(o);
  const std::vector<asmap::ScanReport> reports{
      asmap::aggregate(outcomes, table, orgs, a.top_n, "all with SNI"),
      asmap::aggregate(v4, table, orgs, a.top_n, "IPv4 with SNI"),
      asmap::aggregate(v6, table, orgs, a.top_n, "IPv6 with SNI")};
  const auto text = asmap::render_report(reports, *asmap::report_format_from_string(a.format));
  out << text;

  m.count("addresses", all.size());
  m.count("responsive", responsive.size());
  m.count("targets", targets.size());
  m.count("handshakes", reports[0].handshakes);
  m.count("migrations", reports[0].migrations);

  fs::path manifest = g.manifest_out;
  if (!a.out_dir.empty()) {
    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    write_file(dir / "world.json", sim::scenario_to_json(pop.scenario));
    std::string lines;
    for (const auto& ip : all) lines += ip.to_string() + "\n";
    write_file(dir / "addresses.txt", lines);
    lines.clear();
    for (const auto& [p, asn] : pop.prefixes) lines += p.to_string() + " " + std::to_string(asn) + "\n";
    write_file(dir / "prefixes.txt", lines);
    lines.clear();
    for (const auto& [asn, name] : pop.orgs) lines += std::to_string(asn) + "|" + name + "\n";
    write_file(dir / "orgs.txt", lines);
    lines.clear();
    for (const auto& [ip, names] : domains) {
      for (const auto& n : names) lines += n + "," + ip.to_string() + "\n";
    }
    write_file(dir / "domains.csv", lines);
    emit((dir / "responsive.csv").string(), out,
         [&](std::ostream& o) { discovery::write_responsive(responsive, o); });
    scan::write_results(outcomes, dir / "results.jsonl", scan::ResultFormat::Jsonl);
    const auto report_name = a.format == "json" ? "report.json" : a.format == "csv" ? "report.csv" : "report.txt";
    write_file(dir / report_name, text);
    for (const char* f : {"world.json", "addresses.txt", "prefixes.txt", "orgs.txt", "domains.csv",
                          "responsive.csv", "results.jsonl", report_name}) {
      m.dataset(dir / f);
    }
    if (manifest.empty()) manifest = dir / "manifest.json";
  }
  if (!manifest.empty()) m.write(manifest);
  return kExitOk;
}

const std::set<std::string> kModes{"with-sni", "no-sni"};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"QUIC connection-migration measurement pipeline", "qmigscan"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--blocklist", g.blocklist, "Opt-out CIDR list");
  app.add_option("--manifest-out", g.manifest_out, "Where to write the run manifest");

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "Find QUIC responders with version-negotiation probes");
  p->fallthrough();
  p->add_option("--world", probe.world, "Scenario JSON")->required();
  p->add_option("--addresses", probe.addresses, "Address list (default: every scenario host)");
  p->add_option("--port", probe.port)->capture_default_str();
  p->add_option("--rate", probe.rate, "Probes per second")->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("-o,--out", probe.out, "Responsive CSV (default stdout)");
  p->add_option("--trace-out", probe.trace_out, "Datagram trace JSONL");

  ScanArgs sc;
  auto* s = app.add_subcommand("scan", "Handshake, migrate and fetch over each target");
  s->fallthrough();
  s->add_option("--world", sc.world, "Scenario JSON");
  auto* resp = s->add_option("--responsive", sc.responsive, "Responsive CSV from probe");
  s->add_option("--addresses", sc.addresses, "Address list")->excludes(resp);
  s->add_option("--domains", sc.domains, "domain,ip CSV (default: scenario domains)");
  s->add_option("--mode", sc.mode)->check(CLI::IsMember(kModes))->capture_default_str();
  s->add_option("--port", sc.port)->capture_default_str();
  s->add_option("--rate", sc.config.rate_pps, "New connections per second")->capture_default_str();
  s->add_option("--max-inflight", sc.config.max_inflight)->capture_default_str();
  s->add_option("--handshake-timeout-ms", sc.config.handshake_timeout_ms)->capture_default_str();
  s->add_option("--path-timeout-ms", sc.config.path_timeout_ms)->capture_default_str();
  s->add_option("--path-retries", sc.config.path_retries)->capture_default_str();
  s->add_flag("--no-retire", sc.no_retire, "Keep the pre-migration CID");
  s->add_option("--http-path", sc.config.http_path)->capture_default_str();
  s->add_option("--base-port", sc.config.base_port)->capture_default_str();
  s->add_option("--format", sc.format, "jsonl or csv (default: from extension)")
      ->check(CLI::IsMember({"jsonl", "csv"}));
  s->add_option("-o,--out", sc.out, "Results file (default stdout)");
  s->add_option("--trace-out", sc.trace_out, "Datagram trace JSONL");
  s->add_option("--transport", sc.transport)->check(CLI::IsMember({"sim", "real"}))->capture_default_str();

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Aggregate results by AS and organization");
  r->fallthrough();
  r->add_option("--results", rep.results, "Results JSONL or CSV")->required();
  r->add_option("--prefixes", rep.prefixes, "`CIDR ASN` table");
  r->add_option("--orgs", rep.orgs, "`ASN|OrgName` table");
  r->add_option("--top-n", rep.top_n)->capture_default_str();
  r->add_option("--format", rep.format)->check(CLI::IsMember({"text", "text-table", "csv", "json"}))
      ->capture_default_str();
  r->add_option("--label", rep.label)->capture_default_str();
  r->add_option("-o,--out", rep.out, "Report file (default stdout)");

  DemoArgs demo;
  auto* d = app.add_subcommand("demo", "Probe, scan and report over a synthetic internet");
  d->fallthrough();
  d->add_option("--population", demo.spec.population, "Named QUIC hosts")->capture_default_str();
  d->add_option("--capable-share", demo.spec.capable_share)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  d->add_option("--unnamed-ratio", demo.spec.unnamed_ratio)->capture_default_str();
  d->add_option("--silent-ratio", demo.spec.silent_ratio)->capture_default_str();
  d->add_option("--probe-rate", demo.probe_rate)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--scan-rate", demo.scan_rate)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--top-n", demo.top_n)->capture_default_str();
  d->add_option("--format", demo.format)->check(CLI::IsMember({"text", "text-table", "csv", "json"}))
      ->capture_default_str();
  d->add_option("--out", demo.out_dir, "Directory for every intermediate file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (p->parsed()) return cmd_probe(probe, g, out);
    if (s->parsed()) return cmd_scan(sc, g, out);
    if (r->parsed()) return cmd_report(rep, g, out);
    if (d->parsed()) return cmd_demo(demo, g, out);
  } catch (const Error& e) {
    err << "qmigscan: " << to_string(e.code()) << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "qmigscan: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace qmig::cli
