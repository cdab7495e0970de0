#include "qmig/net.hpp"

#include <arpa/inet.h>

#include <charconv>

#include "qmig/error.hpp"

namespace qmig {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidCid: return "InvalidCid";
    case ErrorCode::InvalidVersion: return "InvalidVersion";
    case ErrorCode::CidTooShort: return "CidTooShort";
    case ErrorCode::NotVersionNegotiation: return "NotVersionNegotiation";
    case ErrorCode::EchoMismatch: return "EchoMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::UnknownFrameType: return "UnknownFrameType";
    case ErrorCode::InvalidFrame: return "InvalidFrame";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::LimitExceeded: return "LimitExceeded";
    case ErrorCode::NoSpareCid: return "NoSpareCid";
    case ErrorCode::NoIssuedCid: return "NoIssuedCid";
    case ErrorCode::MigrationDisabled: return "MigrationDisabled";
    case ErrorCode::WrongPhase: return "WrongPhase";
    case ErrorCode::UnknownPath: return "UnknownPath";
    case ErrorCode::DeadlineExceeded: return "DeadlineExceeded";
    case ErrorCode::TransportUnavailable: return "TransportUnavailable";
    case ErrorCode::Blocklisted: return "Blocklisted";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

ParseError::ParseError(std::string_view source, std::size_t line, std::string_view detail)
    : Error(ErrorCode::ParseError,
            std::string(source) + ":" + std::to_string(line) + ": " + std::string(detail)),
      line_(line) {}

IpAddress IpAddress::v4(std::uint32_t host_order) {
  IpAddress a;
  a.family_ = Family::V4;
  a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
  a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
  a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
  a.bytes_[3] = static_cast<std::uint8_t>(host_order);
  return a;
}

IpAddress IpAddress::v6(const std::array<std::uint8_t, 16>& octets) {
  IpAddress a;
  a.family_ = Family::V6;
  a.bytes_ = octets;
  return a;
}

std::optional<IpAddress> IpAddress::try_parse(std::string_view text) {
  // inet_pton needs a terminated buffer; addresses are short.
  if (text.empty() || text.size() > INET6_ADDRSTRLEN) return std::nullopt;
  std::string buf(text);
  IpAddress a;
  if (buf.find(':') == std::string::npos) {
    if (inet_pton(AF_INET, buf.c_str(), a.bytes_.data()) != 1) return std::nullopt;
    a.family_ = Family::V4;
  } else {
    if (inet_pton(AF_INET6, buf.c_str(), a.bytes_.data()) != 1) return std::nullopt;
    a.family_ = Family::V6;
  }
  return a;
}

IpAddress IpAddress::parse(std::string_view text) {
  if (auto a = try_parse(text)) return *a;
  throw Error(ErrorCode::ParseError, "invalid IP address '" + std::string(text) + "'");
}

IpAddress IpAddress::masked(unsigned prefix_len) const noexcept {
  IpAddress out = *this;
  for (unsigned i = 0; i < 16; ++i) {
    const unsigned lo = i * 8;
    if (prefix_len >= lo + 8) continue;
    if (prefix_len <= lo) {
      out.bytes_[i] = 0;
    } else {
      const unsigned keep = prefix_len - lo;
      out.bytes_[i] &= static_cast<std::uint8_t>(0xFFu << (8 - keep));
    }
  }
  return out;
}

std::string IpAddress::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  inet_ntop(is_v4() ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof(buf));
  return buf;
}

std::string SocketAddr::to_string() const {
  if (ip.is_v4()) return ip.to_string() + ":" + std::to_string(port);
  return "[" + ip.to_string() + "]:" + std::to_string(port);
}

std::string PathId::to_string() const {
  return local.to_string() + "->" + remote.to_string();
}

std::optional<Prefix> Prefix::try_parse(std::string_view text) {
  const auto slash = text.find('/');
  auto ip = IpAddress::try_parse(text.substr(0, slash));
  if (!ip) return std::nullopt;
  unsigned len = ip->bit_width();
  if (slash != std::string_view::npos) {
    const auto digits = text.substr(slash + 1);
    if (digits.empty()) return std::nullopt;
    auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
    if (ec != std::errc() || end != digits.data() + digits.size()) return std::nullopt;
    if (len > ip->bit_width()) return std::nullopt;
  }
  return Prefix{ip->masked(len), static_cast<std::uint8_t>(len)};
}

Prefix Prefix::parse(std::string_view text) {
  if (auto p = try_parse(text)) return *p;
  throw Error(ErrorCode::ParseError, "invalid prefix '" + std::string(text) + "'");
}

bool Prefix::contains(const IpAddress& ip) const noexcept {
  return ip.family() == network.family() && ip.masked(length) == network;
}

std::string Prefix::to_string() const {
  return network.to_string() + "/" + std::to_string(length);
}

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

}  // namespace qmig
