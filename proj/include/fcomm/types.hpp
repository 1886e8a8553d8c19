#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>

namespace fcomm {

/// Identity of one process in a job of `np` processes.
struct RankId {
  std::uint32_t value = 0;

  constexpr RankId() = default;
  constexpr explicit RankId(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(RankId, RankId) = default;
};

/// Message tag. A (source, dest, tag) triple names at most one in-flight message.
struct Tag {
  std::uint32_t value = 0;

  constexpr Tag() = default;
  constexpr explicit Tag(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(Tag, Tag) = default;
};

/// Hostname or virtual-node label such as `vnode3`.
struct NodeId {
  std::string value;

  NodeId() = default;
  explicit NodeId(std::string v) : value(std::move(v)) {}

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline std::ostream& operator<<(std::ostream& os, RankId r) { return os << r.value; }
inline std::ostream& operator<<(std::ostream& os, Tag t) { return os << t.value; }
inline std::ostream& operator<<(std::ostream& os, const NodeId& n) { return os << n.value; }

enum class TransportMode { SharedFs, LocalFs };

std::string to_string(TransportMode mode);
TransportMode parse_transport_mode(const std::string& text);

}  // namespace fcomm

template <>
struct std::hash<fcomm::RankId> {
  std::size_t operator()(fcomm::RankId r) const noexcept { return std::hash<std::uint32_t>{}(r.value); }
};

template <>
struct std::hash<fcomm::NodeId> {
  std::size_t operator()(const fcomm::NodeId& n) const noexcept { return std::hash<std::string>{}(n.value); }
};
