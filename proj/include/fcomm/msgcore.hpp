#pragma once

// Message framing, file naming and payload checksums shared by every
// transport and collective.
//
// Buffer file layout (little-endian, fixed width, 30-byte header):
//
//   offset  size  field
//        0     4  magic "FMSG"
//        4     2  format version
//        6     4  source rank
//       10     4  dest rank
//       14     4  tag
//       18     8  payload length
//       26     4  CRC-32 of payload
//       30     n  payload
//
// Lock files are empty; their existence is the whole signal.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fcomm/types.hpp"

namespace fcomm {

using Bytes = std::vector<std::byte>;

inline constexpr std::array<char, 4> kFrameMagic = {'F', 'M', 'S', 'G'};
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kHeaderSize = 30;

// Dest value carried by a multicast buffer that several receivers read
// through links. Never a valid rank.
inline constexpr std::uint32_t kMulticastDest = 0xFFFFFFFFu;

struct MessageEnvelope {
  RankId source;
  RankId dest;
  Tag tag;
  Bytes payload;

  friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

struct FrameHeader {
  std::uint16_t version = kFrameVersion;
  std::uint32_t source = 0;
  std::uint32_t dest = 0;
  std::uint32_t tag = 0;
  std::uint64_t payload_len = 0;
  std::uint32_t payload_crc = 0;
};

struct MessageFilePair {
  std::filesystem::path buffer_path;
  std::filesystem::path lock_path;

  friend bool operator==(const MessageFilePair&, const MessageFilePair&) = default;
};

std::uint32_t crc32(std::span<const std::byte> data) noexcept;

/// `{dir}/msg_d{dest}_s{source}_t{tag}.buf` and the matching `.lock`.
/// Dest comes first so a receiver can find its messages by prefix.
MessageFilePair message_file_names(RankId dest, RankId source, Tag tag,
                                   const std::filesystem::path& dir);

std::array<std::byte, kHeaderSize> encode_header(const FrameHeader& header) noexcept;

/// Parses and validates magic and version. Throws BadMagic, UnsupportedVersion
/// or Truncated.
FrameHeader decode_header(std::span<const std::byte> bytes);

Bytes encode_message(const MessageEnvelope& env);

/// Throws BadMagic, UnsupportedVersion, ChecksumMismatch or Truncated.
MessageEnvelope decode_message(std::span<const std::byte> bytes);

}  // namespace fcomm
