#include "qmig/asmap.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qmig/error.hpp"
#include "text_util.hpp"

namespace qmig::asmap {
namespace {

std::optional<std::uint32_t> parse_asn(std::string_view s) {
  if (s.size() > 2 && (s[0] == 'A' || s[0] == 'a') && (s[1] == 'S' || s[1] == 's')) s.remove_prefix(2);
  std::uint32_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename Row, typename Key, typename Name>
void rank(std::vector<Row>& rows, Key key, Name name, std::uint32_t top_n) {
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return name(a) < name(b);
  });
  if (rows.size() > top_n) rows.resize(top_n);
}

std::string pad(std::string s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

// Left column left-aligned, the rest right-aligned.
void write_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    widths.resize(std::max(widths.size(), r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      line += pad(r[i], widths[i], i != 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

std::string with_pct(std::uint64_t num, std::uint64_t den) {
  return group_thousands(num) + " (" + format_pct(num, den) + ")";
}

std::string csv_cell(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::vector<std::pair<Prefix, std::uint32_t>> PrefixTable::entries() const {
  std::vector<std::pair<Prefix, std::uint32_t>> out;
  trie_.for_each([&](const Prefix& p, std::uint32_t asn) { out.emplace_back(p, asn); });
  return out;
}

PrefixTable load_prefix_table(const std::filesystem::path& path) {
  PrefixTable table;
  const auto source = path.string();
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    const auto cut = text.find_first_of(" \t");
    if (cut == std::string_view::npos) throw ParseError(source, line, "expected `CIDR ASN`");
    auto prefix = Prefix::try_parse(text.substr(0, cut));
    if (!prefix) throw ParseError(source, line, "invalid prefix");
    auto asn = parse_asn(detail::trim(text.substr(cut)));
    if (!asn) throw ParseError(source, line, "invalid ASN");
    table.insert(*prefix, *asn);
    ++table.lines_loaded_;
  });
  return table;
}

std::optional<std::uint32_t> lookup_asn(const PrefixTable& table, const IpAddress& ip) {
  return table.lookup(ip);
}

std::string OrgMap::name(std::uint32_t asn) const {
  auto it = names_.find(asn);
  return it != names_.end() ? it->second : "AS" + std::to_string(asn);
}

OrgMap load_org_map(const std::filesystem::path& path) {
  OrgMap orgs;
  const auto source = path.string();
  detail::for_each_record(path, [&](std::size_t line, std::string_view text) {
    const auto bar = text.find('|');
    if (bar == std::string_view::npos) throw ParseError(source, line, "expected `ASN|OrgName`");
    auto asn = parse_asn(detail::trim(text.substr(0, bar)));
    if (!asn) throw ParseError(source, line, "invalid ASN");
    const auto name = detail::trim(text.substr(bar + 1));
    if (name.empty()) throw ParseError(source, line, "empty organization name");
    orgs.set(*asn, std::string(name));
  });
  return orgs;
}

ScanReport aggregate(std::span<const scan::ScanOutcome> outcomes, const PrefixTable& table,
                     const OrgMap& orgs, std::uint32_t top_n, std::string label) {
  ScanReport r;
  r.label = std::move(label);
  std::set<std::uint32_t> all, hs, mig;
  std::map<std::string, OrgRow> by_org;
  std::map<std::string, std::uint64_t> headers;
  for (const auto& o : outcomes) {
    const auto asn = table.lookup(o.target.ip);
    const std::string org = asn ? orgs.name(*asn) : std::string(kUnknownOrg);
    auto& row = by_org[org];
    row.org = org;
    ++r.targets;
    ++row.targets;
    if (asn) all.insert(*asn);
    if (o.handshake_ok) {
      ++r.handshakes;
      ++row.handshakes;
      if (asn) hs.insert(*asn);
    }
    if (o.migration_ok) {
      ++r.migrations;
      ++row.migrations;
      if (asn) mig.insert(*asn);
      if (o.server_header) ++headers[*o.server_header];
    }
  }
  r.distinct_ases = all.size();
  r.handshake_ases = hs.size();
  r.migration_ases = mig.size();
  r.handshake_pct = r.targets ? 100.0 * r.handshakes / r.targets : 0.0;
  r.migration_pct = r.handshakes ? 100.0 * r.migrations / r.handshakes : 0.0;

  for (auto& [_, row] : by_org) r.top_orgs.push_back(std::move(row));
  rank(
      r.top_orgs, [](const OrgRow& x) { return x.targets; },
      [](const OrgRow& x) -> const std::string& { return x.org; }, top_n);
  for (auto& [h, n] : headers) r.top_server_headers.push_back(HeaderRow{h, n});
  rank(
      r.top_server_headers, [](const HeaderRow& x) { return x.count; },
      [](const HeaderRow& x) -> const std::string& { return x.header; }, top_n);
  return r;
}

std::string format_pct(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return "0%";
  // Exact for counts below 2^63 / 2000.
  const std::uint64_t tenths = (2000 * num + den) / (2 * den);
  if (tenths < 100) {
    std::string s = std::to_string(tenths / 10);
    if (tenths % 10) s += "." + std::to_string(tenths % 10);
    return s + "%";
  }
  return std::to_string((200 * num + den) / (2 * den)) + "%";
}

std::string format_count(std::uint64_t n) {
  if (n < 1000) return std::to_string(n);
  const std::uint64_t tenths = (n + 50) / 100;  // tenths of a thousand, half-up
  std::string s = std::to_string(tenths / 10);
  if (tenths % 10) s += "." + std::to_string(tenths % 10);
  return s + "k";
}

std::string format_header_count(std::string_view header, std::uint64_t count) {
  return std::string(header) + "(" + format_count(count) + ")";
}

std::string group_thousands(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
  if (s == "text" || s == "text-table") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  return std::nullopt;
}

std::string render_report(const ScanReport& report, ReportFormat format) {
  return render_report(std::span<const ScanReport>(&report, 1), format);
}

std::string render_report(std::span<const ScanReport> reports, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::Text: {
      std::vector<std::vector<std::string>> summary{{"scan", "targets", "distinct ASes",
                                                     "handshakes", "handshake ASes", "migrations",
                                                     "migration ASes"}};
      std::vector<std::vector<std::string>> providers{
          {"scan", "organization", "targets", "handshakes", "migrations"}};
      std::vector<std::vector<std::string>> headers{{"scan", "rank", "server header"}};
      for (const auto& r : reports) {
        // A scan without targets has nothing to show.
        if (r.targets == 0) continue;
        summary.push_back({r.label, group_thousands(r.targets), group_thousands(r.distinct_ases),
                           with_pct(r.handshakes, r.targets),
                           with_pct(r.handshake_ases, r.distinct_ases),
                           with_pct(r.migrations, r.handshakes),
                           with_pct(r.migration_ases, r.handshake_ases)});
        for (const auto& o : r.top_orgs) {
          providers.push_back({r.label, o.org, group_thousands(o.targets),
                               group_thousands(o.handshakes), group_thousands(o.migrations)});
        }
        for (std::size_t i = 0; i < r.top_server_headers.size(); ++i) {
          const auto& h = r.top_server_headers[i];
          headers.push_back({r.label, std::to_string(i + 1), format_header_count(h.header, h.count)});
        }
      }
      write_table(out, summary);
      out << "\ntop providers\n";
      write_table(out, providers);
      out << "\ntop server headers (migrated targets)\n";
      write_table(out, headers);
      break;
    }
    case ReportFormat::Csv: {
      out << "scan,targets,distinct_ases,handshakes,handshake_pct,handshake_ases,handshake_ases_pct,"
             "migrations,migration_pct,migration_ases,migration_ases_pct\n";
      for (const auto& r : reports) {
        if (r.targets == 0) continue;
        out << csv_cell(r.label) << ',' << r.targets << ',' << r.distinct_ases << ','
            << r.handshakes << ',' << format_pct(r.handshakes, r.targets) << ','
            << r.handshake_ases << ',' << format_pct(r.handshake_ases, r.distinct_ases) << ','
            << r.migrations << ',' << format_pct(r.migrations, r.handshakes) << ','
            << r.migration_ases << ',' << format_pct(r.migration_ases, r.handshake_ases) << '\n';
      }
      out << "\nscan,organization,targets,handshakes,migrations\n";
      for (const auto& r : reports) {
        for (const auto& o : r.top_orgs) {
          out << csv_cell(r.label) << ',' << csv_cell(o.org) << ',' << o.targets << ','
              << o.handshakes << ',' << o.migrations << '\n';
        }
      }
      out << "\nscan,server_header,count\n";
      for (const auto& r : reports) {
        for (const auto& h : r.top_server_headers) {
          out << csv_cell(r.label) << ',' << csv_cell(h.header) << ',' << h.count << '\n';
        }
      }
      break;
    }
    case ReportFormat::Json: {
      nlohmann::ordered_json scans = nlohmann::ordered_json::array();
      for (const auto& r : reports) {
        nlohmann::ordered_json j;
        j["label"] = r.label;
        j["targets"] = r.targets;
        j["distinct_ases"] = r.distinct_ases;
        j["handshakes"] = r.handshakes;
        j["handshake_ases"] = r.handshake_ases;
        j["migrations"] = r.migrations;
        j["migration_ases"] = r.migration_ases;
        j["handshake_pct"] = r.handshake_pct;
        j["migration_pct"] = r.migration_pct;
        j["display"] = {{"handshake_pct", format_pct(r.handshakes, r.targets)},
                        {"handshake_ases_pct", format_pct(r.handshake_ases, r.distinct_ases)},
                        {"migration_pct", format_pct(r.migrations, r.handshakes)},
                        {"migration_ases_pct", format_pct(r.migration_ases, r.handshake_ases)}};
        j["top_orgs"] = nlohmann::ordered_json::array();
        for (const auto& o : r.top_orgs) {
          j["top_orgs"].push_back({{"org", o.org},
                                   {"targets", o.targets},
                                   {"handshakes", o.handshakes},
                                   {"migrations", o.migrations}});
        }
        j["top_server_headers"] = nlohmann::ordered_json::array();
        for (const auto& h : r.top_server_headers) {
          j["top_server_headers"].push_back({{"header", h.header},
                                             {"count", h.count},
                                             {"display", format_header_count(h.header, h.count)}});
        }
        scans.push_back(std::move(j));
      }
      out << nlohmann::ordered_json{{"scans", scans}}.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

}  // namespace qmig::asmap
