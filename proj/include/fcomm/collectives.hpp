#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fcomm/p2p.hpp"

namespace fcomm {

/// Collectives claim the tag range [tag_base, tag_base + kCollectiveTagStride)
/// for their internal messages.
inline constexpr std::uint32_t kCollectiveTagStride = 1024;

// ---------------------------------------------------------------------------
// Block distribution

/// Balanced contiguous blocks: the first `global_len % np` ranks own one
/// extra element.
std::uint64_t block_len(std::uint64_t global_len, std::uint32_t np, std::uint32_t r);
std::uint64_t block_offset(std::uint64_t global_len, std::uint32_t np, std::uint32_t r);

/// Rank `rank`'s share of a block-distributed array of doubles.
struct DistVector {
  std::uint64_t global_len = 0;
  std::uint32_t np = 1;
  RankId rank;
  std::vector<double> local;

  /// Slices this rank's block out of a full array.
  static DistVector from_global(std::span<const double> global, std::uint32_t np, RankId rank);

  /// Throws ShapeMismatch if `local` is not exactly this rank's block.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Multicast

struct McastGroup {
  RankId root;
  std::vector<RankId> members;  // distinct, root excluded
};

/// Root side publishes and returns a copy of `payload`; member side receives
/// and returns what the root published. Members sharing the root's inbox
/// read one buffer through symlinks. Members elsewhere are grouped by inbox:
/// the root sends one copy per group to its lowest member, which relays it
/// to the rest of its group the same way.
Bytes mcast(CommContext& ctx, const McastGroup& group, Tag tag, std::span<const std::byte> payload = {});

// ---------------------------------------------------------------------------
// Broadcast

/// One buffer, a symlink per receiver, then the locks, all in the shared
/// directory. SharedFs only.
Bytes bcast_central(CommContext& ctx, RankId root, Tag tag, std::span<const std::byte> payload = {});

/// Two levels of multicast: root to one distributor per other node, then
/// each distributor to the rest of its node. The root distributes on its own
/// node even when it is not the lowest rank there. Uses tags tag_base and
/// tag_base + 1.
Bytes bcast_node_aware(CommContext& ctx, RankId root, Tag tag_base, std::span<const std::byte> payload = {});

/// Who delivers to whom in bcast_node_aware.
struct NodeAwarePlan {
  McastGroup level1;
  std::vector<McastGroup> level2;  // one per node with more than its distributor
};

NodeAwarePlan plan_node_aware(const HostRankMap& map, RankId root);

// ---------------------------------------------------------------------------
// Aggregation

struct AggStep {
  std::uint32_t round;
  RankId sender;
  RankId receiver;
};

/// Binomial gather schedule: in round k every rank r with
/// r mod 2^(k+1) == 2^k sends what it has accumulated to r - 2^k.
std::vector<AggStep> agg_schedule(std::uint32_t np);

/// Gathers the distributed array onto rank 0 (which returns all of it in
/// index order); every other rank returns an empty vector. Round k uses tag
/// tag_base + k.
std::vector<double> agg(CommContext& ctx, const DistVector& v, Tag tag_base);

}  // namespace fcomm
