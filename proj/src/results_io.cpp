#include <charconv>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "qmig/error.hpp"
#include "qmig/scanner.hpp"
#include "text_util.hpp"

namespace qmig::scan {
namespace {

using nlohmann::ordered_json;

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json to_json(const ScanOutcome& o) {
  ordered_json j;
  j["ip"] = o.target.ip.to_string();
  j["port"] = o.target.port;
  j["sni"] = opt(o.sni_used);
  j["handshake_ok"] = o.handshake_ok;
  j["server_issued_cid"] = o.server_issued_cid;
  j["migration_disabled_param"] = o.migration_disabled_param;
  j["migration_ok"] = o.migration_ok;
  j["http_status"] = opt(o.http_status);
  j["server_header"] = opt(o.server_header);
  j["error_class"] = std::string(to_string(o.error_class));
  j["t_handshake_ms"] = opt(o.timings_ms.handshake);
  j["t_migration_ms"] = opt(o.timings_ms.migration);
  j["t_http_ms"] = opt(o.timings_ms.http);
  return j;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos && !s.empty()) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

template <typename T>
std::string csv_num(const std::optional<T>& v) {
  return v ? std::to_string(*v) : std::string();
}

// A CSV cell: nullopt for an empty unquoted field, "" for a quoted empty one.
using Cell = std::optional<std::string>;

std::vector<Cell> split_csv(std::string_view line, std::string_view source, std::size_t number) {
  std::vector<Cell> cells;
  std::size_t i = 0;
  for (;;) {
    if (i < line.size() && line[i] == '"') {
      std::string v;
      ++i;
      for (;;) {
        if (i >= line.size()) throw ParseError(source, number, "unterminated quote");
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            v += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        v += line[i++];
      }
      cells.emplace_back(std::move(v));
      if (i < line.size() && line[i] != ',') throw ParseError(source, number, "junk after quote");
    } else {
      const auto end = std::min(line.find(',', i), line.size());
      const auto raw = line.substr(i, end - i);
      cells.push_back(raw.empty() ? Cell{} : Cell{std::string(raw)});
      i = end;
    }
    if (i >= line.size()) break;
    ++i;  // comma
    if (i == line.size()) {
      cells.emplace_back();
      break;
    }
  }
  return cells;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Fields {
  std::string_view source;
  std::size_t line;

  [[noreturn]] void fail(std::string_view what) const { throw ParseError(source, line, what); }

  bool boolean(const Cell& c, std::string_view name) const {
    if (c == "true") return true;
    if (c == "false") return false;
    fail(std::string(name) + ": expected true/false");
  }
  template <typename T>
  std::optional<T> number(const Cell& c, std::string_view name) const {
    if (!c) return std::nullopt;
    auto v = parse_uint<T>(*c);
    if (!v) fail(std::string(name) + ": expected an integer");
    return v;
  }
};

ScanOutcome assemble(const std::vector<Cell>& cells, const Fields& f) {
  if (cells.size() != std::size(kResultColumns)) f.fail("wrong number of columns");
  ScanOutcome o;
  auto ip = cells[0] ? IpAddress::try_parse(*cells[0]) : std::nullopt;
  if (!ip) f.fail("ip: invalid address");
  auto port = f.number<std::uint16_t>(cells[1], "port");
  if (!port) f.fail("port: missing");
  std::vector<std::string> snis;
  if (cells[2]) snis.push_back(*cells[2]);
  o.target = Target(*ip, *port, snis);
  o.sni_used = cells[2];
  o.handshake_ok = f.boolean(cells[3], "handshake_ok");
  o.server_issued_cid = f.boolean(cells[4], "server_issued_cid");
  o.migration_disabled_param = f.boolean(cells[5], "migration_disabled_param");
  o.migration_ok = f.boolean(cells[6], "migration_ok");
  o.http_status = f.number<std::uint16_t>(cells[7], "http_status");
  o.server_header = cells[8];
  auto cls = cells[9] ? error_class_from_string(*cells[9]) : std::nullopt;
  if (!cls) f.fail("error_class: unknown value");
  o.error_class = *cls;
  o.timings_ms.handshake = f.number<std::uint64_t>(cells[10], "t_handshake_ms");
  o.timings_ms.migration = f.number<std::uint64_t>(cells[11], "t_migration_ms");
  o.timings_ms.http = f.number<std::uint64_t>(cells[12], "t_http_ms");
  return o;
}

Cell json_cell(const nlohmann::json& j, std::string_view key, const Fields& f) {
  auto it = j.find(key);
  if (it == j.end()) f.fail("missing key " + std::string(key));
  if (it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_boolean()) return std::string(it->get<bool>() ? "true" : "false");
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  f.fail("bad value for " + std::string(key));
}

}  // namespace

void write_header(std::ostream& out, ResultFormat format) {
  if (format != ResultFormat::Csv) return;
  bool first = true;
  for (auto c : kResultColumns) {
    if (!first) out << ',';
    out << c;
    first = false;
  }
  out << '\n';
}

void write_record(std::ostream& out, const ScanOutcome& o, ResultFormat format) {
  if (format == ResultFormat::Jsonl) {
    out << to_json(o).dump() << '\n';
    return;
  }
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << o.target.ip.to_string() << ',' << o.target.port << ','
      << (o.sni_used ? csv_field(*o.sni_used) : "") << ',' << b(o.handshake_ok) << ','
      << b(o.server_issued_cid) << ',' << b(o.migration_disabled_param) << ','
      << b(o.migration_ok) << ',' << csv_num(o.http_status) << ','
      << (o.server_header ? csv_field(*o.server_header) : "") << ',' << to_string(o.error_class)
      << ',' << csv_num(o.timings_ms.handshake) << ',' << csv_num(o.timings_ms.migration) << ','
      << csv_num(o.timings_ms.http) << '\n';
}

void write_results(std::span<const ScanOutcome> outcomes, const std::filesystem::path& path,
                   ResultFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_header(out, format);
  for (const auto& o : outcomes) write_record(out, o, format);
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<ScanOutcome> read_results(const std::filesystem::path& path, ResultFormat format) {
  auto in = detail::open_input(path);
  const auto source = path.string();
  std::vector<ScanOutcome> out;
  std::string line;
  std::size_t number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    Fields f{source, number};
    if (format == ResultFormat::Csv) {
      if (!header_seen) {
        header_seen = true;
        if (line.rfind("ip,", 0) != 0) f.fail("missing header");
        continue;
      }
      out.push_back(assemble(split_csv(line, source, number), f));
    } else {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        f.fail(e.what());
      }
      if (!j.is_object()) f.fail("expected an object");
      std::vector<Cell> cells;
      for (auto key : kResultColumns) cells.push_back(json_cell(j, key, f));
      out.push_back(assemble(cells, f));
    }
  }
  return out;
}

ResultFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ResultFormat::Csv : ResultFormat::Jsonl;
}

}  // namespace qmig::scan
