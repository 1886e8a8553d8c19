#include "fcomm/p2p.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#include "fcomm/environment.hpp"
#include "fcomm/error.hpp"
#include "fsutil.hpp"

namespace fcomm {

namespace {

using Clock = std::chrono::steady_clock;

std::string require_env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') throw Error(ErrorCode::InvalidArgument, std::string(name) + " is not set");
  return v;
}

std::optional<std::string> optional_env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::uint64_t env_number(const char* name, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + "='" + text + "' is not a number");
  }
}

bool present(const std::filesystem::path& p) {
  std::error_code ec;
  return std::filesystem::exists(p, ec);  // follows links: a lock symlink counts once its target exists
}

// After a multicast member drops its links, the last one out removes the
// shared buffer and lock. Every member removes its own links before
// scanning, so the final scan always comes up empty.
void release_multicast(const std::filesystem::path& inbox, RankId source, Tag tag,
                       const std::filesystem::path& target) {
  const std::string suffix = "_s" + std::to_string(source.value) + "_t" + std::to_string(tag.value) + ".buf";
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(inbox, ec)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("msg_d") || !name.ends_with(suffix)) continue;
    std::error_code link_ec;
    if (!entry.is_symlink(link_ec)) continue;
    if (std::filesystem::read_symlink(entry.path(), link_ec) == target) return;  // still referenced
  }
  const auto shared = multicast_file_names(source, tag, inbox);
  detail::remove_quietly(shared.buffer_path);
  detail::remove_quietly(shared.lock_path);
}

}  // namespace

void PollPolicy::validate() const {
  if (initial.count() <= 0) throw Error(ErrorCode::InvalidArgument, "poll initial interval must be positive");
  if (initial > max) throw Error(ErrorCode::InvalidArgument, "poll initial interval exceeds max interval");
  if (!(backoff_factor > 1.0)) throw Error(ErrorCode::InvalidArgument, "poll backoff factor must exceed 1");
  if (timeout && std::chrono::duration_cast<std::chrono::microseconds>(*timeout) < initial) {
    throw Error(ErrorCode::InvalidArgument, "poll timeout shorter than initial interval");
  }
}

CommContext::CommContext(RankId rank, Transport transport, PollPolicy poll)
    : rank_(rank), transport_(std::move(transport)), poll_(poll) {
  if (rank_.value >= transport_.map().np()) {
    throw Error(ErrorCode::RankOutOfRange, "rank " + std::to_string(rank_.value) + " not below np " +
                                               std::to_string(transport_.map().np()));
  }
  poll_.validate();
}

void CommContext::set_poll(const PollPolicy& poll) {
  poll.validate();
  poll_ = poll;
}

CommContext CommContext::from_environment() {
  const auto rank = static_cast<std::uint32_t>(env_number(env::kRank, require_env(env::kRank)));
  const auto np = env_number(env::kNp, require_env(env::kNp));
  HostRankMap map = load_map(require_env(env::kMapFile));
  if (map.np() != np) {
    throw Error(ErrorCode::InvalidArgument, "FCOMM_NP=" + std::to_string(np) + " but host map has " +
                                                std::to_string(map.np()) + " ranks");
  }
  const std::filesystem::path msg_dir = require_env(env::kMsgDir);
  if (map.msg_dir(RankId(rank)) != msg_dir) {
    throw Error(ErrorCode::InvalidArgument, "FCOMM_MSG_DIR disagrees with the host map for rank " +
                                                std::to_string(rank));
  }

  TransportMode mode = TransportMode::LocalFs;
  if (auto t = optional_env(env::kTransport)) {
    mode = parse_transport_mode(*t);
  } else {
    mode = TransportMode::SharedFs;
    for (std::uint32_t r = 1; r < map.np(); ++r) {
      if (map.msg_dir(RankId(r)) != map.msg_dir(RankId(0))) mode = TransportMode::LocalFs;
    }
  }

  std::unique_ptr<Copier> copier;
  if (mode == TransportMode::LocalFs) {
    CopierConfig cc;
    if (auto k = optional_env(env::kCopier)) cc.kind = parse_copier_kind(*k);
    if (auto v = optional_env(env::kCopierLatencyMs)) {
      cc.latency = std::chrono::milliseconds(env_number(env::kCopierLatencyMs, *v));
    }
    if (auto v = optional_env(env::kCopierBandwidth)) cc.bandwidth_bytes_per_s = env_number(env::kCopierBandwidth, *v);
    if (auto v = optional_env(env::kCopierStallMs)) {
      cc.stall_before_lock = std::chrono::milliseconds(env_number(env::kCopierStallMs, *v));
    }
    if (auto v = optional_env(env::kScpConnectTimeout)) {
      cc.connect_timeout_s = static_cast<int>(env_number(env::kScpConnectTimeout, *v));
    }
    copier = make_copier(cc);
  }

  PollPolicy poll;
  if (auto v = optional_env(env::kPollInitialUs)) poll.initial = std::chrono::microseconds(env_number(env::kPollInitialUs, *v));
  if (auto v = optional_env(env::kPollMaxUs)) poll.max = std::chrono::microseconds(env_number(env::kPollMaxUs, *v));
  if (auto v = optional_env(env::kPollTimeoutMs)) poll.timeout = std::chrono::milliseconds(env_number(env::kPollTimeoutMs, *v));

  CommContext ctx(RankId(rank), Transport(mode, std::move(map), std::move(copier)), poll);
  if (auto v = optional_env(env::kKeepFiles)) ctx.keep_consumed(*v == "1" || *v == "true");
  return ctx;
}

void send(CommContext& ctx, RankId dest, Tag tag, std::span<const std::byte> payload) {
  Transport& t = ctx.transport();
  const auto pair = t.publish(ctx.rank(), dest, tag, payload);
  if (t.crosses_nodes(ctx.rank(), dest)) t.transfer(pair, dest);
  ++ctx.counters().messages_sent;
}

bool probe(const CommContext& ctx, RankId source, Tag tag) {
  ctx.transport().map().at(source);  // range check
  return present(message_file_names(ctx.rank(), source, tag, ctx.transport().inbox_of(ctx.rank())).lock_path);
}

Bytes recv(CommContext& ctx, RankId source, Tag tag) {
  ctx.transport().map().at(source);  // range check
  const auto inbox = ctx.transport().inbox_of(ctx.rank());
  const auto pair = message_file_names(ctx.rank(), source, tag, inbox);
  const PollPolicy& poll = ctx.poll();

  const auto start = Clock::now();
  auto interval = std::chrono::duration<double, std::micro>(poll.initial);
  const auto cap = std::chrono::duration<double, std::micro>(poll.max);
  for (;;) {
    ++ctx.counters().poll_checks;
    if (present(pair.lock_path)) break;
    auto sleep = std::chrono::duration_cast<Clock::duration>(interval);
    if (poll.timeout) {
      const auto deadline = start + *poll.timeout;
      const auto now = Clock::now();
      if (now >= deadline) {
        throw Error(ErrorCode::Timeout, "no message from rank " + std::to_string(source.value) + " with tag " +
                                            std::to_string(tag.value) + " after " +
                                            std::to_string(poll.timeout->count()) + " ms");
      }
      sleep = std::min<Clock::duration>(sleep, deadline - now);
    }
    std::this_thread::sleep_for(sleep);
    interval = std::min(interval * poll.backoff_factor, cap);
  }

  const Bytes frame = detail::read_file(pair.buffer_path);
  MessageEnvelope env = decode_message(frame);
  const bool dest_ok = env.dest == ctx.rank() || env.dest.value == kMulticastDest;
  if (env.source != source || env.tag != tag || !dest_ok) {
    throw Error(ErrorCode::HeaderMismatch, pair.buffer_path.filename().string() + " carries source " +
                                               std::to_string(env.source.value) + ", dest " +
                                               std::to_string(env.dest.value) + ", tag " +
                                               std::to_string(env.tag.value));
  }

  if (!ctx.keeps_consumed()) {
    std::error_code ec;
    if (std::filesystem::is_symlink(pair.buffer_path, ec)) {
      const auto target = std::filesystem::read_symlink(pair.buffer_path, ec);
      detail::remove_quietly(pair.buffer_path);
      detail::remove_quietly(pair.lock_path);
      release_multicast(inbox, source, tag, target);
    } else {
      detail::remove_quietly(pair.buffer_path);
      detail::remove_quietly(pair.lock_path);
    }
  }
  ++ctx.counters().messages_received;
  return std::move(env.payload);
}

}  // namespace fcomm
