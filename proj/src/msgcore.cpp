#include "fcomm/msgcore.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "fcomm/error.hpp"

namespace fcomm {

namespace {

template <typename T>
void put_le(std::byte* out, T value) noexcept {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out[i] = static_cast<std::byte>((value >> (8 * i)) & 0xFFu);
  }
}

template <typename T>
T get_le(const std::byte* in) noexcept {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  }
  return value;
}

}  // namespace

std::uint32_t crc32(std::span<const std::byte> data) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  std::size_t remaining = data.size();
  // zlib takes a uInt length
  while (remaining > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

MessageFilePair message_file_names(RankId dest, RankId source, Tag tag,
                                   const std::filesystem::path& dir) {
  const std::string stem = "msg_d" + std::to_string(dest.value) + "_s" + std::to_string(source.value) +
                           "_t" + std::to_string(tag.value);
  return {dir / (stem + ".buf"), dir / (stem + ".lock")};
}

std::array<std::byte, kHeaderSize> encode_header(const FrameHeader& header) noexcept {
  std::array<std::byte, kHeaderSize> out{};
  std::memcpy(out.data(), kFrameMagic.data(), kFrameMagic.size());
  put_le(out.data() + 4, header.version);
  put_le(out.data() + 6, header.source);
  put_le(out.data() + 10, header.dest);
  put_le(out.data() + 14, header.tag);
  put_le(out.data() + 18, header.payload_len);
  put_le(out.data() + 26, header.payload_crc);
  return out;
}

FrameHeader decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::Truncated,
                "frame has " + std::to_string(bytes.size()) + " bytes, header needs " + std::to_string(kHeaderSize));
  }
  if (std::memcmp(bytes.data(), kFrameMagic.data(), kFrameMagic.size()) != 0) {
    throw Error(ErrorCode::BadMagic, "frame does not start with FMSG");
  }
  FrameHeader h;
  h.version = get_le<std::uint16_t>(bytes.data() + 4);
  if (h.version != kFrameVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "frame version " + std::to_string(h.version));
  }
  h.source = get_le<std::uint32_t>(bytes.data() + 6);
  h.dest = get_le<std::uint32_t>(bytes.data() + 10);
  h.tag = get_le<std::uint32_t>(bytes.data() + 14);
  h.payload_len = get_le<std::uint64_t>(bytes.data() + 18);
  h.payload_crc = get_le<std::uint32_t>(bytes.data() + 26);
  return h;
}

Bytes encode_message(const MessageEnvelope& env) {
  FrameHeader h;
  h.source = env.source.value;
  h.dest = env.dest.value;
  h.tag = env.tag.value;
  h.payload_len = env.payload.size();
  h.payload_crc = crc32(env.payload);

  Bytes frame(kHeaderSize + env.payload.size());
  const auto header = encode_header(h);
  std::copy(header.begin(), header.end(), frame.begin());
  std::copy(env.payload.begin(), env.payload.end(), frame.begin() + kHeaderSize);
  return frame;
}

MessageEnvelope decode_message(std::span<const std::byte> bytes) {
  const FrameHeader h = decode_header(bytes);
  const std::size_t body = bytes.size() - kHeaderSize;
  if (body != h.payload_len) {
    throw Error(ErrorCode::Truncated, "header declares " + std::to_string(h.payload_len) + " payload bytes, frame holds " +
                                          std::to_string(body));
  }
  const auto payload = bytes.subspan(kHeaderSize);
  if (crc32(payload) != h.payload_crc) {
    throw Error(ErrorCode::ChecksumMismatch, "payload CRC-32 does not match header");
  }
  MessageEnvelope env;
  env.source = RankId(h.source);
  env.dest = RankId(h.dest);
  env.tag = Tag(h.tag);
  env.payload.assign(payload.begin(), payload.end());
  return env;
}

}  // namespace fcomm
