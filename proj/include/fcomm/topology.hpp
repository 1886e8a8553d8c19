#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fcomm/types.hpp"

namespace fcomm {

struct RankPlacement {
  NodeId node;
  std::filesystem::path msg_dir;

  friend bool operator==(const RankPlacement&, const RankPlacement&) = default;
};

/// Host-to-rank map: for each rank, the node it runs on and its message
/// directory. Immutable once built.
///
/// Text form, one line per rank, any order, `#` starts a comment:
///
///     <rank> <node> <msg_dir>
class HostRankMap {
 public:
  HostRankMap() = default;

  /// Validates that ranks 0..n-1 appear exactly once, nodes are non-empty
  /// tokens and directories are absolute.
  explicit HostRankMap(std::vector<RankPlacement> entries);

  std::uint32_t np() const noexcept { return static_cast<std::uint32_t>(entries_.size()); }

  const RankPlacement& at(RankId r) const;
  const NodeId& node_of(RankId r) const { return at(r).node; }
  const std::filesystem::path& msg_dir(RankId r) const { return at(r).msg_dir; }

  /// Distinct nodes ordered by their lowest rank.
  std::vector<NodeId> nodes() const;

  friend bool operator==(const HostRankMap&, const HostRankMap&) = default;

 private:
  std::vector<RankPlacement> entries_;
};

HostRankMap parse_map(std::istream& in);
HostRankMap load_map(const std::filesystem::path& file);
void write_map(const HostRankMap& map, std::ostream& out);
void write_map(const HostRankMap& map, const std::filesystem::path& file);

bool colocated(const HostRankMap& map, RankId a, RankId b);

/// Lowest rank hosted on `node`. Throws UnknownNode.
RankId leader_of(const HostRankMap& map, const NodeId& node);

/// Ascending ranks on the same node as `r`, including `r`.
std::vector<RankId> node_peers(const HostRankMap& map, RankId r);

}  // namespace fcomm
