#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "qmig/net.hpp"

namespace qmig {

// Binary trie keyed by address bits, one tree per family. Inserting an
// existing prefix replaces its value. Nodes live in a flat vector so the
// structure is cheap to copy and safe to share read-only across threads.
template <typename T>
class PrefixTrie {
 public:
  void insert(const Prefix& prefix, T value) {
    auto& nodes = tree(prefix.network.family());
    std::uint32_t at = 0;
    for (unsigned depth = 0; depth < prefix.length; ++depth) {
      const unsigned side = prefix.network.bit(depth);
      if (nodes[at].child[side] == kNone) {
        nodes[at].child[side] = static_cast<std::uint32_t>(nodes.size());
        nodes.emplace_back();
      }
      at = nodes[at].child[side];
    }
    if (!nodes[at].value) ++size_;
    nodes[at].value = std::move(value);
  }

  // Value of the most specific prefix covering `ip`.
  std::optional<T> longest_match(const IpAddress& ip) const {
    const auto& nodes = tree(ip.family());
    std::optional<T> best;
    std::uint32_t at = 0;
    for (unsigned depth = 0;; ++depth) {
      if (nodes[at].value) best = nodes[at].value;
      if (depth == ip.bit_width()) break;
      const std::uint32_t next = nodes[at].child[ip.bit(depth)];
      if (next == kNone) break;
      at = next;
    }
    return best;
  }

  bool covers(const IpAddress& ip) const { return longest_match(ip).has_value(); }

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

  // Visits (prefix, value) pairs in depth-first order, v4 before v6.
  template <typename F>
  void for_each(F&& visit) const {
    walk(v4_, IpAddress::v4(0), 0, 0, visit);
    walk(v6_, IpAddress::v6({}), 0, 0, visit);
  }

 private:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  struct Node {
    std::uint32_t child[2] = {kNone, kNone};
    std::optional<T> value;
  };

  std::vector<Node>& tree(IpAddress::Family f) { return f == IpAddress::Family::V4 ? v4_ : v6_; }
  const std::vector<Node>& tree(IpAddress::Family f) const {
    return f == IpAddress::Family::V4 ? v4_ : v6_;
  }

  template <typename F>
  static void walk(const std::vector<Node>& nodes, IpAddress base, std::uint32_t at,
                   unsigned depth, F& visit) {
    if (nodes[at].value) visit(Prefix{base, static_cast<std::uint8_t>(depth)}, *nodes[at].value);
    for (unsigned side = 0; side < 2; ++side) {
      const std::uint32_t next = nodes[at].child[side];
      if (next == kNone) continue;
      walk(nodes, side ? with_bit(base, depth) : base, next, depth + 1, visit);
    }
  }

  static IpAddress with_bit(const IpAddress& base, unsigned i) {
    if (base.is_v4()) {
      std::uint32_t v = 0;
      for (auto b : base.octets()) v = (v << 8) | b;
      return IpAddress::v4(v | (1u << (31 - i)));
    }
    std::array<std::uint8_t, 16> o{};
    auto src = base.octets();
    std::copy(src.begin(), src.end(), o.begin());
    o[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    return IpAddress::v6(o);
  }

  std::vector<Node> v4_ = std::vector<Node>(1);
  std::vector<Node> v6_ = std::vector<Node>(1);
  std::size_t size_ = 0;
};

// Membership-only view used for opt-out lists.
class PrefixSet {
 public:
  PrefixSet() = default;
  PrefixSet(std::initializer_list<Prefix> prefixes) {
    for (const auto& p : prefixes) add(p);
  }

  void add(const Prefix& p) { trie_.insert(p, std::monostate{}); }
  bool contains(const IpAddress& ip) const { return trie_.covers(ip); }
  std::size_t size() const noexcept { return trie_.size(); }
  bool empty() const noexcept { return trie_.empty(); }

  std::vector<Prefix> prefixes() const {
    std::vector<Prefix> out;
    trie_.for_each([&](const Prefix& p, std::monostate) { out.push_back(p); });
    return out;
  }

 private:
  PrefixTrie<std::monostate> trie_;
};

}  // namespace qmig
