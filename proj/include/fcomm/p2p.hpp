#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>

#include "fcomm/msgcore.hpp"
#include "fcomm/transport.hpp"

namespace fcomm {

/// How a receiver waits for a lock file: the sleep between existence checks
/// starts at `initial` and grows by `backoff_factor` up to `max`.
struct PollPolicy {
  std::chrono::microseconds initial{1000};
  std::chrono::microseconds max{100000};
  double backoff_factor = 2.0;
  std::optional<std::chrono::milliseconds> timeout;  // empty = wait forever

  /// Throws InvalidArgument unless initial <= max, factor > 1 and a finite
  /// timeout is at least `initial`.
  void validate() const;
};

struct P2pCounters {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  std::uint64_t multicasts_published = 0;
  std::uint64_t poll_checks = 0;
};

/// Everything one rank needs to talk to the others. Confined to a single rank
/// and a single thread of control.
class CommContext {
 public:
  CommContext(RankId rank, Transport transport, PollPolicy poll = {});

  /// Builds the context a launched rank process sees through FCOMM_RANK,
  /// FCOMM_NP, FCOMM_MAP_FILE and FCOMM_MSG_DIR, plus the transport, copier
  /// and polling knobs the launcher forwards.
  static CommContext from_environment();

  RankId rank() const noexcept { return rank_; }
  std::uint32_t np() const noexcept { return transport_.map().np(); }
  Transport& transport() noexcept { return transport_; }
  const Transport& transport() const noexcept { return transport_; }
  const PollPolicy& poll() const noexcept { return poll_; }
  void set_poll(const PollPolicy& poll);

  P2pCounters& counters() noexcept { return counters_; }
  const P2pCounters& counters() const noexcept { return counters_; }

  /// Leave consumed message files in place (debugging).
  void keep_consumed(bool keep) noexcept { keep_consumed_ = keep; }
  bool keeps_consumed() const noexcept { return keep_consumed_; }

 private:
  RankId rank_;
  Transport transport_;
  PollPolicy poll_;
  P2pCounters counters_;
  bool keep_consumed_ = false;
};

/// Publishes the message and, when the receiver is on another node under
/// LocalFs, transfers it. On return the receiver can see it.
void send(CommContext& ctx, RankId dest, Tag tag, std::span<const std::byte> payload);

/// Blocks until the lock for (source, this rank, tag) appears, verifies the
/// frame, consumes both files and returns the payload. Throws Timeout,
/// ChecksumMismatch or HeaderMismatch.
Bytes recv(CommContext& ctx, RankId source, Tag tag);

/// True iff the lock for (source, this rank, tag) exists now. Never consumes.
bool probe(const CommContext& ctx, RankId source, Tag tag);

}  // namespace fcomm
