#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "qmig/error.hpp"
#include "qmig/netsim.hpp"
#include "qmig/population.hpp"
#include "qmig/scanner.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace qmig;
using namespace qmig::scan;
using qmig::testing::TempDir;

namespace {

const IpAddress kIp = IpAddress::parse("192.0.2.1");

Target target(std::string sni = "example.com") {
  return sni.empty() ? Target(kIp, 443) : Target(kIp, 443, {sni});
}

ScanOutcome scan_one(ServerBehavior b, sim::Impairments imp = {}, ScanConfig cfg = {},
                     const Target& t = target(), sim::World* out_world = nullptr) {
  sim::World local;
  auto& w = out_world ? *out_world : local;
  w.add_server(t.ip, std::move(b), imp);
  return scan_target(t, cfg, w);
}

ScanOutcome random_outcome(std::mt19937_64& rng, std::size_t i) {
  ScanOutcome o;
  const auto ip = (i % 3 == 0) ? IpAddress::parse("2001:db8::" + std::to_string(i % 9000 + 1))
                               : IpAddress::v4(0xC6336400u + static_cast<std::uint32_t>(i));
  std::vector<std::string> snis;
  if (rng() % 2) snis.push_back("h" + std::to_string(i) + ".example");
  o.target = Target(ip, static_cast<std::uint16_t>(rng()), snis);
  o.sni_used = o.target.primary_sni();
  o.handshake_ok = rng() % 2;
  o.server_issued_cid = rng() % 2;
  o.migration_disabled_param = rng() % 2;
  o.migration_ok = rng() % 2;
  if (rng() % 2) o.http_status = static_cast<std::uint16_t>(rng() % 600);
  switch (rng() % 4) {
    case 0: break;
    case 1: o.server_header = ""; break;
    case 2: o.server_header = "nginx"; break;
    default: o.server_header = "we\"ird, \"header\""; break;
  }
  o.error_class = static_cast<ErrorClass>(rng() % 9);
  if (rng() % 2) o.timings_ms.handshake = rng() % 5000;
  if (rng() % 2) o.timings_ms.migration = rng() % 5000;
  if (rng() % 2) o.timings_ms.http = rng() % 5000;
  return o;
}

}  // namespace

TEST(ErrorClassNames, RoundTrip) {
  for (int i = 0; i < 9; ++i) {
    const auto c = static_cast<ErrorClass>(i);
    EXPECT_EQ(error_class_from_string(to_string(c)), c);
  }
  EXPECT_FALSE(error_class_from_string("Nope"));
}

TEST(ScanConfigTest, Validation) {
  ScanConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_inflight = 0;
  EXPECT_THROW(c.validate(), Error);
  c.max_inflight = 1;
  c.rate_pps = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(ScanTarget, CapableServerSucceeds) {
  ServerBehavior b;
  b.http_server_header = "nginx";
  const auto o = scan_one(b);
  EXPECT_TRUE(o.handshake_ok);
  EXPECT_TRUE(o.server_issued_cid);
  EXPECT_TRUE(o.migration_ok);
  EXPECT_FALSE(o.migration_disabled_param);
  EXPECT_EQ(o.http_status, std::optional<std::uint16_t>(200));
  EXPECT_EQ(o.server_header, std::optional<std::string>("nginx"));
  EXPECT_EQ(o.error_class, ErrorClass::None);
  EXPECT_EQ(o.sni_used, std::optional<std::string>("example.com"));
  // 10 ms each way: SH after one RTT, PATH_RESPONSE one RTT after the probe.
  EXPECT_EQ(o.timings_ms.handshake, std::optional<std::uint64_t>(20));
  EXPECT_TRUE(o.timings_ms.migration);
  EXPECT_EQ(o.timings_ms.http, std::optional<std::uint64_t>(20));
  EXPECT_TRUE(o.consistent());
}

TEST(ScanTarget, NoExtraCid) {
  ServerBehavior b;
  b.issues_extra_cid = false;
  const auto o = scan_one(b);
  EXPECT_EQ(o.error_class, ErrorClass::NoSpareCid);
  EXPECT_TRUE(o.handshake_ok);
  EXPECT_FALSE(o.server_issued_cid);
  EXPECT_FALSE(o.migration_ok);
  EXPECT_TRUE(o.consistent());
}

TEST(ScanTarget, MigrationDisabledRecorded) {
  ServerBehavior b;
  b.disable_active_migration = true;
  const auto o = scan_one(b);
  EXPECT_EQ(o.error_class, ErrorClass::MigrationDisabled);
  EXPECT_TRUE(o.migration_disabled_param);
  EXPECT_FALSE(o.migration_ok);
  EXPECT_TRUE(o.consistent());
}

TEST(ScanTarget, UnansweredChallenge) {
  ServerBehavior b;
  b.answers_path_challenge = false;
  sim::World w;
  const auto o = scan_one(b, {}, {}, target(), &w);
  EXPECT_EQ(o.error_class, ErrorClass::PathValidationTimeout);
  EXPECT_TRUE(o.server_issued_cid);
  EXPECT_FALSE(o.http_status);
  int challenges = 0;
  for (const auto& r : w.trace()) {
    for (const auto& f : r.frames()) challenges += std::holds_alternative<wire::PathChallenge>(f);
  }
  EXPECT_EQ(challenges, 3);
}

TEST(ScanTarget, SniRequiredButAbsent) {
  ServerBehavior b;
  b.requires_sni = true;
  const auto o = scan_one(b, {}, {}, target(""));
  EXPECT_EQ(o.error_class, ErrorClass::HandshakeRejected);
  EXPECT_FALSE(o.handshake_ok);
  EXPECT_FALSE(o.sni_used);
  EXPECT_TRUE(o.consistent());
}

TEST(ScanTarget, SilentHostIsUnresponsive) {
  sim::World w;
  const auto o = scan_target(target(), {}, w);
  EXPECT_EQ(o.error_class, ErrorClass::UdpUnresponsive);
  EXPECT_TRUE(o.consistent());
}

TEST(ScanTarget, TotalLossTimesOut) {
  sim::Impairments imp;
  imp.loss_rate = 1.0;
  const auto o = scan_one({}, imp);
  EXPECT_EQ(o.error_class, ErrorClass::HandshakeTimeout);
  EXPECT_FALSE(o.timings_ms.handshake);
}

TEST(ScanTarget, LoadBalancerMisroutesSomeProbes) {
  // Across many sessions the new source port lands on the handshake backend
  // about half the time; every session agrees with the backends chosen.
  int ok = 0, failed = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    sim::World w(i);
    sim::Impairments imp;
    imp.lb_backend_count = 2;
    imp.seed = i;
    w.add_server(kIp, {}, imp);
    ScanConfig cfg;
    const auto o = scan_target(target(), cfg, w, i);
    const auto home = cfg.base_port + 2 * i;
    const PathId hs{SocketAddr{cfg.local_v4, static_cast<std::uint16_t>(home)}, SocketAddr{kIp, 443}};
    const PathId mg{SocketAddr{cfg.local_v4, static_cast<std::uint16_t>(home + 1)}, SocketAddr{kIp, 443}};
    const bool same = w.backend_for(kIp, hs) == w.backend_for(kIp, mg);
    EXPECT_EQ(o.error_class, same ? ErrorClass::None : ErrorClass::PathValidationTimeout);
    (same ? ok : failed)++;
  }
  EXPECT_GT(ok, 60);
  EXPECT_GT(failed, 60);
}

TEST(ScanTarget, BlocklistedThrows) {
  sim::World w;
  w.add_server(kIp, {});
  ScanConfig cfg;
  cfg.blocklist.add(Prefix::parse("192.0.2.0/24"));
  try {
    scan_target(target(), cfg, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Blocklisted);
  }
  EXPECT_TRUE(w.trace().empty());
}

TEST(ScanTarget, HttpOnlyAfterValidationOnNewPath) {
  sim::World w;
  ScanConfig cfg;
  const auto o = scan_one({}, {}, cfg, target(), &w);
  ASSERT_EQ(o.error_class, ErrorClass::None);
  bool validated = false;
  for (const auto& r : w.trace()) {
    for (const auto& f : r.frames()) {
      if (std::holds_alternative<wire::PathResponse>(f)) validated = true;
      if (std::holds_alternative<wire::HttpGet>(f)) {
        EXPECT_TRUE(validated);
        EXPECT_EQ(r.path.local.port, cfg.base_port + 1);
      }
    }
  }
}

TEST(ScanTarget, RetireToggle) {
  for (bool retire : {true, false}) {
    sim::World w;
    ScanConfig cfg;
    cfg.retire_after_migration = retire;
    scan_one({}, {}, cfg, target(), &w);
    int retires = 0;
    for (const auto& r : w.trace()) {
      for (const auto& f : r.frames()) retires += std::holds_alternative<wire::RetireConnectionId>(f);
    }
    EXPECT_EQ(retires, retire ? 1 : 0);
  }
}

TEST(ScanTarget, LossyMatrixAgreesWithTraceFacts) {
  for (int flags = 0; flags < 16; ++flags) {
    ServerBehavior b;
    b.requires_sni = flags & 1;
    b.issues_extra_cid = flags & 2;
    b.disable_active_migration = flags & 4;
    b.answers_path_challenge = flags & 8;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      sim::World w(trial * 31 + flags);
      sim::Impairments imp;
      imp.loss_rate = 0.3;
      imp.seed = trial;
      w.add_server(kIp, b, imp);
      const bool sni = trial % 2;
      ScanConfig cfg;
      cfg.seed = trial;
      const auto o = scan_target(target(sni ? "example.com" : ""), cfg, w);
      const auto expected = qmig::testing::class_from_facts(b, sni, qmig::testing::facts_from(w.trace()));
      EXPECT_EQ(o.error_class, expected) << "flags=" << flags << " trial=" << trial;
      EXPECT_TRUE(o.consistent());
    }
  }
}

TEST(RunScan, EmptyInput) {
  sim::World w;
  EXPECT_TRUE(run_scan({}, {}, w).empty());
}

TEST(RunScan, GroundTruthPopulation) {
  sim::PopulationSpec spec;
  spec.population = 1000;
  spec.unnamed_ratio = 0;
  spec.silent_ratio = 0;
  spec.seed = 3;
  const auto pop = sim::build_population(spec);
  sim::World w(3);
  sim::populate(w, pop.scenario);
  std::vector<Target> targets;
  for (const auto& h : pop.scenario.hosts) targets.emplace_back(h.ip, 443, h.domains);
  const auto outcomes = run_scan(targets, {}, w);
  ASSERT_EQ(outcomes.size(), 1000u);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    ASSERT_EQ(outcomes[i].target, targets[i]);
    EXPECT_EQ(to_string(outcomes[i].error_class), *pop.scenario.hosts[i].expect) << i;
  }
}

TEST(RunScan, ConcurrencyDoesNotChangeOutcomes) {
  sim::PopulationSpec spec;
  spec.population = 300;
  spec.unnamed_ratio = 0;
  spec.silent_ratio = 0.2;
  spec.seed = 9;
  const auto pop = sim::build_population(spec);
  std::vector<Target> targets;
  for (const auto& h : pop.scenario.hosts) targets.emplace_back(h.ip, 443, h.domains);

  auto run = [&](std::uint32_t inflight, std::uint32_t rate) {
    sim::World w(9);
    sim::populate(w, pop.scenario);
    ScanConfig cfg;
    cfg.max_inflight = inflight;
    cfg.rate_pps = rate;
    return run_scan(targets, cfg, w);
  };
  const auto one = run(1, 100);
  EXPECT_EQ(one, run(64, 100));
  EXPECT_EQ(one, run(7, 1000));
}

TEST(RunScan, RateAndInflightBounds) {
  std::vector<Target> targets;
  sim::World w;
  for (std::uint32_t i = 0; i < 120; ++i) {
    const auto a = IpAddress::v4(0xC0000200u + i);
    w.add_server(a, {});
    targets.emplace_back(a, 443, std::vector<std::string>{"x.example"});
  }
  ScanConfig cfg;
  cfg.rate_pps = 40;
  cfg.max_inflight = 5;
  std::size_t seen = 0;
  run_scan(targets, cfg, w, [&](const ScanOutcome&) { ++seen; });
  EXPECT_EQ(seen, 120u);
  std::vector<SimTime> starts;
  for (const auto& r : w.trace()) {
    if (r.dir == sim::Direction::ClientToServer && r.long_header()) starts.push_back(r.sent_at);
  }
  ASSERT_EQ(starts.size(), 120u);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    std::size_t n = 0;
    for (std::size_t j = i; j < starts.size() && starts[j] < starts[i] + SimTime{1000}; ++j) ++n;
    // Token bucket: a full burst of rate_pps plus the refill inside one second.
    EXPECT_LE(n, 2 * cfg.rate_pps);
  }
  // Steady state is bounded by the refill rate.
  const auto span = (starts.back() - starts.front()).count();
  EXPECT_GE(span, static_cast<long>((120 - cfg.rate_pps) * 1000 / cfg.rate_pps) - 1);
}

TEST(RunScan, SinkSeesInputOrder) {
  std::vector<Target> targets;
  sim::World w;
  for (std::uint32_t i = 0; i < 40; ++i) {
    const auto a = IpAddress::v4(0xC0000200u + i);
    ServerBehavior b;
    b.answers_path_challenge = i % 2;  // slow failures interleave with fast successes
    w.add_server(a, b);
    targets.emplace_back(a, 443, std::vector<std::string>{"x.example"});
  }
  std::vector<IpAddress> order;
  ScanConfig cfg;
  cfg.rate_pps = 1000;
  run_scan(targets, cfg, w, [&](const ScanOutcome& o) { order.push_back(o.target.ip); });
  ASSERT_EQ(order.size(), 40u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], targets[i].ip);
}

TEST(RunScan, BlocklistedSkippedAndUntouched) {
  std::vector<Target> targets;
  sim::World w;
  for (std::uint32_t i = 0; i < 10; ++i) {
    const auto a = IpAddress::v4(0xC0000200u + i);
    w.add_server(a, {});
    targets.emplace_back(a, 443, std::vector<std::string>{"x.example"});
  }
  ScanConfig cfg;
  cfg.blocklist.add(Prefix::parse("192.0.2.4/30"));
  const auto out = run_scan(targets, cfg, w);
  EXPECT_EQ(out.size(), 6u);
  for (const auto& r : w.trace()) EXPECT_FALSE(cfg.blocklist.contains(r.path.remote.ip) && r.dir == sim::Direction::ClientToServer);
}

TEST(Consistency, FlagChainTable) {
  // Every combination of the four flags, http presence and class.
  for (int bits = 0; bits < 32; ++bits) {
    for (int c = 0; c < 9; ++c) {
      ScanOutcome o;
      o.handshake_ok = bits & 1;
      o.server_issued_cid = bits & 2;
      o.migration_disabled_param = bits & 4;
      o.migration_ok = bits & 8;
      if (bits & 16) o.http_status = 200;
      o.error_class = static_cast<ErrorClass>(c);
      const bool chain = (!o.migration_ok || (o.server_issued_cid && o.handshake_ok)) &&
                         (!o.server_issued_cid || o.handshake_ok) &&
                         (!o.migration_disabled_param || !o.migration_ok);
      const bool success = o.migration_ok && o.http_status;
      if (!chain || ((o.error_class == ErrorClass::None) != success)) EXPECT_FALSE(o.consistent());
    }
  }
}

TEST(Results, CsvHeaderOrder) {
  std::ostringstream out;
  write_header(out, ResultFormat::Csv);
  EXPECT_EQ(out.str(),
            "ip,port,sni,handshake_ok,server_issued_cid,migration_disabled_param,migration_ok,"
            "http_status,server_header,error_class,t_handshake_ms,t_migration_ms,t_http_ms\n");
  std::ostringstream none;
  write_header(none, ResultFormat::Jsonl);
  EXPECT_TRUE(none.str().empty());
}

TEST(Results, RoundTripBothFormats) {
  TempDir dir;
  std::mt19937_64 rng(1);
  std::vector<ScanOutcome> outcomes;
  for (std::size_t i = 0; i < 100; ++i) outcomes.push_back(random_outcome(rng, i));
  for (auto fmt : {ResultFormat::Jsonl, ResultFormat::Csv}) {
    const auto p = dir / (fmt == ResultFormat::Csv ? "r.csv" : "r.jsonl");
    write_results(outcomes, p, fmt);
    EXPECT_EQ(format_for(p), fmt);
    EXPECT_EQ(read_results(p, fmt), outcomes);
  }
}

TEST(Results, JsonlOneValidObjectPerLine) {
  TempDir dir;
  std::mt19937_64 rng(2);
  std::vector<ScanOutcome> outcomes;
  for (std::size_t i = 0; i < 20; ++i) outcomes.push_back(random_outcome(rng, i));
  const auto p = dir / "r.jsonl";
  write_results(outcomes, p, ResultFormat::Jsonl);
  std::istringstream in(qmig::testing::read_file(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ASSERT_TRUE(j.is_object());
    std::size_t k = 0;
    for (auto it = j.begin(); it != j.end(); ++it) ++k;
    EXPECT_EQ(k, std::size(kResultColumns));
    ++n;
  }
  EXPECT_EQ(n, outcomes.size());
}

TEST(Results, BadInputReportsLine) {
  TempDir dir;
  const auto p = dir.write("bad.jsonl", "\n{\"ip\":\"192.0.2.1\"}\n");
  try {
    read_results(p, ResultFormat::Jsonl);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(write_results({}, "/nonexistent/dir/x.jsonl", ResultFormat::Jsonl), Error);
}

TEST(RealTransportSeam, ScanReportsUnavailable) {
  RealTransport real;
  const std::vector<Target> targets{target()};
  for (int i = 0; i < 2; ++i) {
    try {
      if (i == 0) scan_target(targets[0], {}, real);
      else run_scan(targets, {}, real);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::TransportUnavailable);
    }
  }
}
