#include "fcomm/collectives.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <string>

#include "fcomm/error.hpp"

namespace fcomm {

static_assert(std::endian::native == std::endian::little, "agg ships doubles in host byte order");

namespace {

void check_tag_range(Tag tag_base) {
  if (static_cast<std::uint64_t>(tag_base.value) + kCollectiveTagStride > 0x100000000ull) {
    throw Error(ErrorCode::InvalidArgument, "tag_base " + std::to_string(tag_base.value) + " leaves no room for " +
                                                std::to_string(kCollectiveTagStride) + " collective tags");
  }
}

void check_group(const CommContext& ctx, const McastGroup& group) {
  const auto& map = ctx.transport().map();
  map.at(group.root);
  std::vector<RankId> sorted = group.members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::InvalidArgument, "multicast members must be distinct");
  }
  for (RankId m : sorted) {
    map.at(m);
    if (m == group.root) throw Error(ErrorCode::InvalidArgument, "multicast root listed as a member");
  }
}

}  // namespace

std::uint64_t block_len(std::uint64_t global_len, std::uint32_t np, std::uint32_t r) {
  if (np == 0) throw Error(ErrorCode::InvalidArgument, "np must be positive");
  return global_len / np + (r < global_len % np ? 1 : 0);
}

std::uint64_t block_offset(std::uint64_t global_len, std::uint32_t np, std::uint32_t r) {
  if (np == 0) throw Error(ErrorCode::InvalidArgument, "np must be positive");
  return static_cast<std::uint64_t>(r) * (global_len / np) + std::min<std::uint64_t>(r, global_len % np);
}

DistVector DistVector::from_global(std::span<const double> global, std::uint32_t np, RankId rank) {
  if (rank.value >= np) throw Error(ErrorCode::RankOutOfRange, "rank " + std::to_string(rank.value));
  DistVector v;
  v.global_len = global.size();
  v.np = np;
  v.rank = rank;
  const auto off = block_offset(v.global_len, np, rank.value);
  const auto len = block_len(v.global_len, np, rank.value);
  v.local.assign(global.begin() + static_cast<std::ptrdiff_t>(off),
                 global.begin() + static_cast<std::ptrdiff_t>(off + len));
  return v;
}

void DistVector::validate() const {
  if (np == 0 || rank.value >= np) throw Error(ErrorCode::ShapeMismatch, "rank outside distribution");
  const auto want = block_len(global_len, np, rank.value);
  if (local.size() != want) {
    throw Error(ErrorCode::ShapeMismatch, "rank " + std::to_string(rank.value) + " holds " +
                                              std::to_string(local.size()) + " elements, block is " +
                                              std::to_string(want));
  }
}

Bytes mcast(CommContext& ctx, const McastGroup& group, Tag tag, std::span<const std::byte> payload) {
  check_group(ctx, group);
  Transport& t = ctx.transport();
  const RankId me = ctx.rank();
  const auto root_inbox = t.inbox_of(group.root);

  std::vector<RankId> local;
  std::map<std::filesystem::path, std::vector<RankId>> remote;
  for (RankId m : group.members) {
    auto inbox = t.inbox_of(m);
    if (inbox == root_inbox) {
      local.push_back(m);
    } else {
      remote[inbox].push_back(m);
    }
  }
  std::sort(local.begin(), local.end());
  for (auto& [_, ranks] : remote) std::sort(ranks.begin(), ranks.end());

  if (me == group.root) {
    if (!local.empty()) {
      t.publish_multicast(me, tag, local, payload);
      ++ctx.counters().multicasts_published;
    }
    for (const auto& [_, ranks] : remote) send(ctx, ranks.front(), tag, payload);
    return Bytes(payload.begin(), payload.end());
  }

  if (std::find(local.begin(), local.end(), me) != local.end()) return recv(ctx, group.root, tag);

  const auto it = remote.find(t.inbox_of(me));
  if (it == remote.end() || std::find(it->second.begin(), it->second.end(), me) == it->second.end()) {
    throw Error(ErrorCode::InvalidArgument, "rank " + std::to_string(me.value) + " is not in the multicast group");
  }
  const auto& ranks = it->second;
  if (me != ranks.front()) return recv(ctx, ranks.front(), tag);

  Bytes received = recv(ctx, group.root, tag);
  const std::vector<RankId> rest(ranks.begin() + 1, ranks.end());
  if (!rest.empty()) {
    t.publish_multicast(me, tag, rest, received);
    ++ctx.counters().multicasts_published;
  }
  return received;
}

Bytes bcast_central(CommContext& ctx, RankId root, Tag tag, std::span<const std::byte> payload) {
  if (ctx.transport().mode() != TransportMode::SharedFs) {
    throw Error(ErrorCode::InvalidArgument, "bcast_central needs the SharedFs transport");
  }
  ctx.transport().map().at(root);
  if (ctx.np() == 1) return Bytes(payload.begin(), payload.end());
  McastGroup group{root, {}};
  for (std::uint32_t r = 0; r < ctx.np(); ++r) {
    if (RankId(r) != root) group.members.emplace_back(r);
  }
  return mcast(ctx, group, tag, payload);
}

NodeAwarePlan plan_node_aware(const HostRankMap& map, RankId root) {
  const NodeId& root_node = map.node_of(root);
  NodeAwarePlan plan;
  plan.level1.root = root;
  for (const NodeId& node : map.nodes()) {
    const RankId distributor = node == root_node ? root : leader_of(map, node);
    if (distributor != root) plan.level1.members.push_back(distributor);

    McastGroup local{distributor, {}};
    for (RankId peer : node_peers(map, distributor)) {
      if (peer != distributor) local.members.push_back(peer);
    }
    if (!local.members.empty()) plan.level2.push_back(std::move(local));
  }
  std::sort(plan.level1.members.begin(), plan.level1.members.end());
  return plan;
}

Bytes bcast_node_aware(CommContext& ctx, RankId root, Tag tag_base, std::span<const std::byte> payload) {
  check_tag_range(tag_base);
  const Tag level1_tag(tag_base.value);
  const Tag level2_tag(tag_base.value + 1);
  const NodeAwarePlan plan = plan_node_aware(ctx.transport().map(), root);
  const RankId me = ctx.rank();

  auto own_level2 = [&](RankId distributor) {
    return std::find_if(plan.level2.begin(), plan.level2.end(),
                        [&](const McastGroup& g) { return g.root == distributor; });
  };

  Bytes data;
  const auto& l1 = plan.level1.members;
  if (me == root) {
    if (!l1.empty()) mcast(ctx, plan.level1, level1_tag, payload);
    data.assign(payload.begin(), payload.end());
  } else if (std::find(l1.begin(), l1.end(), me) != l1.end()) {
    data = mcast(ctx, plan.level1, level1_tag);
  } else {
    for (const auto& g : plan.level2) {
      if (std::find(g.members.begin(), g.members.end(), me) != g.members.end()) return mcast(ctx, g, level2_tag);
    }
    throw Error(ErrorCode::InvalidArgument, "rank " + std::to_string(me.value) + " has no place in the broadcast");
  }

  if (auto g = own_level2(me); g != plan.level2.end()) mcast(ctx, *g, level2_tag, data);
  return data;
}

std::vector<AggStep> agg_schedule(std::uint32_t np) {
  std::vector<AggStep> steps;
  for (std::uint32_t k = 0; (std::uint64_t{1} << k) < np; ++k) {
    const std::uint64_t step = std::uint64_t{1} << k;
    for (std::uint64_t r = step; r < np; r += 2 * step) {
      steps.push_back({k, RankId(static_cast<std::uint32_t>(r)), RankId(static_cast<std::uint32_t>(r - step))});
    }
  }
  return steps;
}

std::vector<double> agg(CommContext& ctx, const DistVector& v, Tag tag_base) {
  check_tag_range(tag_base);
  v.validate();
  const std::uint32_t np = ctx.np();
  const std::uint32_t me = ctx.rank().value;
  if (v.np != np || v.rank != ctx.rank()) {
    throw Error(ErrorCode::ShapeMismatch, "distributed vector belongs to rank " + std::to_string(v.rank.value) +
                                              " of " + std::to_string(v.np));
  }

  std::vector<double> acc = v.local;
  for (std::uint32_t k = 0; (std::uint64_t{1} << k) < np; ++k) {
    const std::uint64_t step = std::uint64_t{1} << k;
    const Tag tag(tag_base.value + k);
    if (me % (2 * step) == step) {
      const auto* bytes = reinterpret_cast<const std::byte*>(acc.data());
      send(ctx, RankId(static_cast<std::uint32_t>(me - step)), tag, {bytes, acc.size() * sizeof(double)});
      return {};
    }
    if (me % (2 * step) == 0 && me + step < np) {
      const auto from = static_cast<std::uint32_t>(me + step);
      const auto upto = static_cast<std::uint32_t>(std::min<std::uint64_t>(me + 2 * step, np));
      const std::uint64_t expected = block_offset(v.global_len, np, upto) - block_offset(v.global_len, np, from);
      // block_offset(np) is global_len
      const Bytes got = recv(ctx, RankId(from), tag);
      if (got.size() != expected * sizeof(double)) {
        throw Error(ErrorCode::ShapeMismatch, "round " + std::to_string(k) + ": rank " + std::to_string(from) +
                                                  " sent " + std::to_string(got.size()) + " bytes, expected " +
                                                  std::to_string(expected * sizeof(double)));
      }
      const auto old = acc.size();
      acc.resize(old + expected);
      std::memcpy(acc.data() + old, got.data(), got.size());
    }
  }
  if (acc.size() != v.global_len) {
    throw Error(ErrorCode::ShapeMismatch, "gathered " + std::to_string(acc.size()) + " of " +
                                              std::to_string(v.global_len) + " elements");
  }
  return acc;
}

}  // namespace fcomm
