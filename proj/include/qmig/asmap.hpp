#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qmig/net.hpp"
#include "qmig/prefix_trie.hpp"
#include "qmig/scanner.hpp"

namespace qmig::asmap {

// prefix -> origin ASN. Re-inserting a prefix keeps the last ASN.
class PrefixTable {
 public:
  void insert(const Prefix& prefix, std::uint32_t asn) { trie_.insert(prefix, asn); }
  std::optional<std::uint32_t> lookup(const IpAddress& ip) const { return trie_.longest_match(ip); }

  std::size_t size() const noexcept { return trie_.size(); }
  // Data lines read by load_prefix_table, duplicates included.
  std::size_t lines_loaded() const noexcept { return lines_loaded_; }
  std::vector<std::pair<Prefix, std::uint32_t>> entries() const;

 private:
  friend PrefixTable load_prefix_table(const std::filesystem::path& path);
  PrefixTrie<std::uint32_t> trie_;
  std::size_t lines_loaded_ = 0;
};

// Lines `CIDR ASN`; blank and '#' lines skipped. Throws ParseError.
PrefixTable load_prefix_table(const std::filesystem::path& path);
std::optional<std::uint32_t> lookup_asn(const PrefixTable& table, const IpAddress& ip);

class OrgMap {
 public:
  void set(std::uint32_t asn, std::string name) { names_[asn] = std::move(name); }
  // Unknown ASNs map to "AS<asn>".
  std::string name(std::uint32_t asn) const;
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::map<std::uint32_t, std::string> names_;
};

// Lines `ASN|OrgName`. Throws ParseError.
OrgMap load_org_map(const std::filesystem::path& path);

inline constexpr std::string_view kUnknownOrg = "UNKNOWN";

struct OrgRow {
  std::string org;
  std::uint64_t targets = 0;
  std::uint64_t handshakes = 0;
  std::uint64_t migrations = 0;
  friend bool operator==(const OrgRow&, const OrgRow&) = default;
};

struct HeaderRow {
  std::string header;
  std::uint64_t count = 0;
  friend bool operator==(const HeaderRow&, const HeaderRow&) = default;
};

struct ScanReport {
  std::string label = "scan";
  std::uint64_t targets = 0;
  std::uint64_t distinct_ases = 0;
  std::uint64_t handshakes = 0;
  std::uint64_t handshake_ases = 0;
  std::uint64_t migrations = 0;
  std::uint64_t migration_ases = 0;
  // handshakes/targets and migrations/handshakes, in percent; 0 for an
  // empty denominator.
  double handshake_pct = 0;
  double migration_pct = 0;
  std::vector<OrgRow> top_orgs;
  std::vector<HeaderRow> top_server_headers;
  friend bool operator==(const ScanReport&, const ScanReport&) = default;
};

// Orgs ranked by targets, headers (migrated targets only) by count; ties by
// name. Unmapped addresses count under UNKNOWN and add no AS.
ScanReport aggregate(std::span<const scan::ScanOutcome> outcomes, const PrefixTable& table,
                     const OrgMap& orgs, std::uint32_t top_n, std::string label = "scan");

// 100*num/den rounded half-up: one decimal below 10% without a trailing
// ".0", integer from 10% up. "0%" when den is 0.
std::string format_pct(std::uint64_t num, std::uint64_t den);
// Below 1000 as is; otherwise thousands with one decimal, ".0" dropped.
std::string format_count(std::uint64_t n);
std::string format_header_count(std::string_view header, std::uint64_t count);
// 12,024,542
std::string group_thousands(std::uint64_t n);

enum class ReportFormat { Text, Csv, Json };
std::optional<ReportFormat> report_format_from_string(std::string_view s);

std::string render_report(const ScanReport& report, ReportFormat format);
std::string render_report(std::span<const ScanReport> reports, ReportFormat format);

}  // namespace qmig::asmap
