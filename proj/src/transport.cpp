#include "fcomm/transport.hpp"

#include <unistd.h>

#include <cerrno>

#include "fcomm/error.hpp"
#include "fsutil.hpp"

namespace fcomm {

namespace {

bool present(const std::filesystem::path& p) {
  std::error_code ec;
  return std::filesystem::exists(std::filesystem::symlink_status(p, ec));
}

bool symlink_refused(int err) { return err == EPERM || err == EOPNOTSUPP || err == ENOSYS; }

}  // namespace

MessageFilePair multicast_file_names(RankId source, Tag tag, const std::filesystem::path& dir) {
  const std::string stem = "mcast_s" + std::to_string(source.value) + "_t" + std::to_string(tag.value);
  return {dir / (stem + ".buf"), dir / (stem + ".lock")};
}

Transport::Transport(TransportMode mode, HostRankMap map, std::unique_ptr<Copier> copier)
    : mode_(mode), map_(std::move(map)), copier_(std::move(copier)) {
  if (map_.np() == 0) throw Error(ErrorCode::InvalidArgument, "transport needs a non-empty host map");
  if (mode_ == TransportMode::SharedFs) {
    shared_dir_ = map_.msg_dir(RankId(0));
    for (std::uint32_t r = 1; r < map_.np(); ++r) {
      if (map_.msg_dir(RankId(r)) != shared_dir_) {
        throw Error(ErrorCode::InvalidArgument, "SharedFs map must give every rank the same msg_dir");
      }
    }
  } else if (!copier_) {
    throw Error(ErrorCode::InvalidArgument, "LocalFs transport needs a copier");
  }
}

std::filesystem::path Transport::inbox_of(RankId r) const {
  const auto& dir = map_.msg_dir(r);  // range check
  return mode_ == TransportMode::SharedFs ? shared_dir_ : dir;
}

bool Transport::crosses_nodes(RankId source, RankId dest) const {
  return mode_ == TransportMode::LocalFs && !colocated(map_, source, dest);
}

MessageFilePair Transport::publish(RankId source, RankId dest, Tag tag, std::span<const std::byte> payload) {
  inbox_of(dest);  // range check
  const auto pair = message_file_names(dest, source, tag, inbox_of(source));
  if (present(pair.lock_path)) {
    throw Error(ErrorCode::StaleMessage, "unconsumed lock " + pair.lock_path.string());
  }

  FrameHeader h;
  h.source = source.value;
  h.dest = dest.value;
  h.tag = tag.value;
  h.payload_len = payload.size();
  h.payload_crc = crc32(payload);
  const auto header = encode_header(h);
  detail::write_file_atomic(pair.buffer_path, header, payload);
  detail::create_lock(pair.lock_path);
  return pair;
}

MessageFilePair Transport::publish(const MessageEnvelope& env) {
  return publish(env.source, env.dest, env.tag, env.payload);
}

void Transport::transfer(const MessageFilePair& pair, RankId dest) {
  if (mode_ != TransportMode::LocalFs) {
    throw Error(ErrorCode::InvalidArgument, "transfer is only meaningful for LocalFs");
  }
  const auto target = inbox_of(dest);
  const NodeId& node = map_.node_of(dest);

  std::error_code ec;
  const auto size = std::filesystem::file_size(pair.buffer_path, ec);
  copier_->copy(pair.buffer_path, node, target / pair.buffer_path.filename());
  copier_->copy(pair.lock_path, node, target / pair.lock_path.filename());
  counter_.remote_copies += 2;
  counter_.bytes_copied += ec ? 0 : size;

  detail::remove_quietly(pair.buffer_path);
  detail::remove_quietly(pair.lock_path);
}

void Transport::publish_multicast(RankId source, Tag tag, std::span<const RankId> members,
                                  std::span<const std::byte> payload) {
  if (members.empty()) return;
  const auto dir = inbox_of(source);
  for (RankId m : members) {
    if (inbox_of(m) != dir) {
      throw Error(ErrorCode::InvalidArgument,
                  "multicast member " + std::to_string(m.value) + " does not share the sender's inbox");
    }
    if (present(message_file_names(m, source, tag, dir).lock_path)) {
      throw Error(ErrorCode::StaleMessage, "member " + std::to_string(m.value) + " has an unconsumed lock");
    }
  }
  const auto shared = multicast_file_names(source, tag, dir);
  if (present(shared.lock_path) || present(shared.buffer_path)) {
    throw Error(ErrorCode::StaleMessage, "unconsumed multicast " + shared.buffer_path.string());
  }

  FrameHeader h;
  h.source = source.value;
  h.dest = kMulticastDest;
  h.tag = tag.value;
  h.payload_len = payload.size();
  h.payload_crc = crc32(payload);
  const auto header = encode_header(h);

  bool use_links = !force_fallback_;
  if (use_links) {
    detail::write_file_atomic(shared.buffer_path, header, payload);
    const auto target = shared.buffer_path.filename();
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto link = message_file_names(members[i], source, tag, dir).buffer_path;
      if (::symlink(target.c_str(), link.c_str()) == 0) {
        ++links_.symlinks;
        continue;
      }
      const int err = errno;
      if (i == 0 && symlink_refused(err)) {
        use_links = false;
        detail::remove_quietly(shared.buffer_path);
        break;
      }
      detail::throw_io("symlink " + link.string(), err);
    }
  }

  if (use_links) {
    detail::create_lock(shared.lock_path);
    const auto target = shared.lock_path.filename();
    for (RankId m : members) {
      const auto link = message_file_names(m, source, tag, dir).lock_path;
      if (::symlink(target.c_str(), link.c_str()) != 0) detail::throw_io("symlink " + link.string(), errno);
      ++links_.symlinks;
    }
    return;
  }

  for (RankId m : members) {
    detail::write_file_atomic(message_file_names(m, source, tag, dir).buffer_path, header, payload);
    ++links_.fallback_copies;
  }
  for (RankId m : members) detail::create_lock(message_file_names(m, source, tag, dir).lock_path);
}

}  // namespace fcomm
