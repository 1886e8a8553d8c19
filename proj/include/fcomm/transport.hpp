#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "fcomm/copier.hpp"
#include "fcomm/msgcore.hpp"
#include "fcomm/topology.hpp"

namespace fcomm {

/// Logical file copies that crossed a node boundary. Only grows.
struct CopyCounter {
  std::uint64_t remote_copies = 0;
  std::uint64_t bytes_copied = 0;
};

struct LinkCounter {
  std::uint64_t symlinks = 0;
  std::uint64_t fallback_copies = 0;  // per-member copies when symlinks are rejected
};

/// Decides where message files are written and how they reach a receiver.
///
/// SharedFs: every rank's inbox is the one shared directory; nothing is ever
/// copied. LocalFs: each node has its own inbox; a sender stages files in its
/// own inbox and the copier moves them when the receiver is on another node.
///
/// One instance per rank process.
class Transport {
 public:
  /// `copier` may be null for SharedFs. Throws InvalidArgument when a SharedFs
  /// map names more than one directory or a LocalFs transport has no copier.
  Transport(TransportMode mode, HostRankMap map, std::unique_ptr<Copier> copier = nullptr);

  TransportMode mode() const noexcept { return mode_; }
  const HostRankMap& map() const noexcept { return map_; }
  const CopyCounter& counter() const noexcept { return counter_; }
  const LinkCounter& links() const noexcept { return links_; }

  std::filesystem::path inbox_of(RankId r) const;

  /// True when a message from `source` to `dest` needs the copier.
  bool crosses_nodes(RankId source, RankId dest) const;

  /// Writes the buffer under a temporary name, renames it into place, then
  /// creates the lock, all at the publish site (the sender's inbox).
  MessageFilePair publish(RankId source, RankId dest, Tag tag, std::span<const std::byte> payload);
  MessageFilePair publish(const MessageEnvelope& env);

  /// Copies the buffer, then the lock, into `dest`'s inbox and removes the
  /// staged pair. LocalFs only.
  void transfer(const MessageFilePair& pair, RankId dest);

  /// One buffer for several receivers sharing the sender's inbox: a single
  /// `mcast_s{source}_t{tag}.buf`, a symlink per member under its normal
  /// message name, then one real lock and a lock symlink per member. Falls
  /// back to per-member copies where symlinks are refused.
  void publish_multicast(RankId source, Tag tag, std::span<const RankId> members,
                         std::span<const std::byte> payload);

  /// Test hook: behave as if the filesystem rejected symlinks.
  void force_symlink_fallback(bool on) noexcept { force_fallback_ = on; }

 private:
  TransportMode mode_;
  HostRankMap map_;
  std::unique_ptr<Copier> copier_;
  std::filesystem::path shared_dir_;
  CopyCounter counter_;
  LinkCounter links_;
  bool force_fallback_ = false;
};

/// Names of the shared buffer and lock written by publish_multicast.
MessageFilePair multicast_file_names(RankId source, Tag tag, const std::filesystem::path& dir);

}  // namespace fcomm
