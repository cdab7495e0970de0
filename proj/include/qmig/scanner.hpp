#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qmig/discovery.hpp"
#include "qmig/prefix_trie.hpp"
#include "qmig/transport.hpp"

namespace qmig::scan {

using discovery::Target;

// Why a target did not complete handshake -> migration -> HTTP. Exactly one
// class per outcome; None only for a full success.
enum class ErrorClass {
  None,
  UdpUnresponsive,
  HandshakeTimeout,
  HandshakeRejected,
  NoSpareCid,
  MigrationDisabled,
  PathValidationTimeout,
  ConnectionReset,
  ProtocolViolation,
};

std::string_view to_string(ErrorClass c) noexcept;
std::optional<ErrorClass> error_class_from_string(std::string_view s) noexcept;

struct Timings {
  std::optional<std::uint64_t> handshake;
  std::optional<std::uint64_t> migration;
  std::optional<std::uint64_t> http;
  friend bool operator==(const Timings&, const Timings&) = default;
};

struct ScanOutcome {
  Target target;
  std::optional<std::string> sni_used;
  bool handshake_ok = false;
  bool server_issued_cid = false;
  bool migration_disabled_param = false;
  bool migration_ok = false;
  std::optional<std::uint16_t> http_status;
  std::optional<std::string> server_header;
  ErrorClass error_class = ErrorClass::None;
  Timings timings_ms;

  // Flag chain and class/flag agreement.
  bool consistent() const noexcept;
  friend bool operator==(const ScanOutcome&, const ScanOutcome&) = default;
};

struct ScanConfig {
  std::uint32_t rate_pps = 100;
  std::uint32_t max_inflight = 64;
  std::uint32_t handshake_timeout_ms = 3000;
  std::uint32_t path_timeout_ms = 1000;
  std::uint32_t path_retries = 2;
  bool retire_after_migration = true;
  std::string http_path = "/";
  PrefixSet blocklist;

  // Seeds client CIDs and challenges; session i uses (seed, i).
  std::uint64_t seed = 0;
  IpAddress local_v4 = IpAddress::parse("198.51.100.10");
  IpAddress local_v6 = IpAddress::parse("2001:db8:ffff::10");
  // Session i binds base_port + 2*(i mod 16384) for the handshake and the
  // next port for the migrated path.
  std::uint16_t base_port = 20000;

  // Throws Error(InvalidArgument).
  void validate() const;
};

// Scans one target to completion on `transport`. `index` selects the local
// ports and per-session seed. Throws Error(Blocklisted) for opted-out
// addresses; every other failure is encoded in the outcome.
ScanOutcome scan_target(const Target& target, const ScanConfig& config, Transport& transport,
                        std::size_t index = 0);

// Scans all non-blocklisted targets, at most max_inflight at once and new
// connections gated by a token bucket (capacity rate_pps, refill
// rate_pps/s). Results come back in input order; `sink`, when given, sees
// each outcome as soon as every earlier one is known.
std::vector<ScanOutcome> run_scan(
    std::span<const Target> targets, const ScanConfig& config, Transport& transport,
    const std::function<void(const ScanOutcome&)>& sink = {});

enum class ResultFormat { Jsonl, Csv };

// Column order shared by the JSONL keys and the CSV header.
inline constexpr std::string_view kResultColumns[] = {
    "ip",         "port",        "sni",          "handshake_ok",   "server_issued_cid",
    "migration_disabled_param",  "migration_ok", "http_status",    "server_header",
    "error_class", "t_handshake_ms", "t_migration_ms", "t_http_ms"};

void write_header(std::ostream& out, ResultFormat format);
void write_record(std::ostream& out, const ScanOutcome& outcome, ResultFormat format);
// Throws Error(IoError).
void write_results(std::span<const ScanOutcome> outcomes, const std::filesystem::path& path,
                   ResultFormat format);
// The candidate SNI list is not persisted: a reloaded target carries only
// the SNI that was used.
std::vector<ScanOutcome> read_results(const std::filesystem::path& path, ResultFormat format);
ResultFormat format_for(const std::filesystem::path& path);

}  // namespace qmig::scan
