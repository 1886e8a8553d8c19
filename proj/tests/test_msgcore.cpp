#include <doctest.h>

#include <random>
#include <set>

#include "fcomm/error.hpp"
#include "fcomm/msgcore.hpp"
#include "support.hpp"

using namespace fcomm;
using fcomm::testing::random_bytes;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fcomm::Error");
  return ErrorCode::IoError;
}

MessageEnvelope sample(std::mt19937_64& rng, std::size_t n) {
  MessageEnvelope env;
  env.source = RankId(static_cast<std::uint32_t>(rng()));
  env.dest = RankId(static_cast<std::uint32_t>(rng()));
  env.tag = Tag(static_cast<std::uint32_t>(rng()));
  env.payload = random_bytes(rng, n);
  return env;
}

}  // namespace

TEST_CASE("file names follow the template") {
  auto p = message_file_names(RankId(2), RankId(1), Tag(0), "/tmp/j1");
  CHECK(p.buffer_path == "/tmp/j1/msg_d2_s1_t0.buf");
  CHECK(p.lock_path == "/tmp/j1/msg_d2_s1_t0.lock");
  auto self = message_file_names(RankId(0), RankId(0), Tag(7), "/x");
  CHECK(self.buffer_path == "/x/msg_d0_s0_t7.buf");
  CHECK(self.lock_path == "/x/msg_d0_s0_t7.lock");
  CHECK(message_file_names(RankId(2), RankId(1), Tag(0), "/x").buffer_path !=
        message_file_names(RankId(2), RankId(10), Tag(0), "/x").buffer_path);
}

TEST_CASE("file names are injective over ranks 0..99 and tags 0..9") {
  std::set<std::string> bufs, locks;
  std::size_t n = 0;
  for (std::uint32_t d = 0; d < 100; ++d) {
    for (std::uint32_t s = 0; s < 100; ++s) {
      for (std::uint32_t t = 0; t < 10; ++t) {
        auto p = message_file_names(RankId(d), RankId(s), Tag(t), "/x");
        CHECK_EQ(p.buffer_path.parent_path(), p.lock_path.parent_path());
        CHECK_EQ(p.buffer_path.stem(), p.lock_path.stem());
        bufs.insert(p.buffer_path.string());
        locks.insert(p.lock_path.string());
        ++n;
      }
    }
  }
  CHECK(bufs.size() == n);
  CHECK(locks.size() == n);
}

TEST_CASE("header layout is bit-exact little-endian") {
  MessageEnvelope env{RankId(0x01020304), RankId(0x0A0B0C0D), Tag(0x11223344), {std::byte{0xAB}, std::byte{0xCD}}};
  const Bytes f = encode_message(env);
  REQUIRE(f.size() == kHeaderSize + 2);
  auto u8 = [&](std::size_t i) { return std::to_integer<unsigned>(f[i]); };
  CHECK(u8(0) == 'F');
  CHECK(u8(1) == 'M');
  CHECK(u8(2) == 'S');
  CHECK(u8(3) == 'G');
  CHECK(u8(4) == 1);  // version
  CHECK(u8(5) == 0);
  CHECK(u8(6) == 0x04);  // source
  CHECK(u8(9) == 0x01);
  CHECK(u8(10) == 0x0D);  // dest
  CHECK(u8(14) == 0x44);  // tag
  CHECK(u8(18) == 2);  // payload_len u64
  for (std::size_t i = 19; i < 26; ++i) CHECK(u8(i) == 0);
  const std::uint32_t crc = crc32(env.payload);
  CHECK(u8(26) == (crc & 0xFF));
  CHECK(u8(29) == (crc >> 24));
  CHECK(u8(30) == 0xAB);
  // zlib's check value for "123456789"
  const char* nine = "123456789";
  CHECK(crc32(std::as_bytes(std::span(nine, 9))) == 0xCBF43926u);
}

TEST_CASE("empty payload encodes to a header-only frame") {
  MessageEnvelope env{RankId(1), RankId(2), Tag(3), {}};
  const Bytes f = encode_message(env);
  CHECK(f.size() == kHeaderSize);
  CHECK(decode_message(f) == env);
}

TEST_CASE("round trip over 1000 random envelopes") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const auto env = sample(rng, rng() % 4096);
    const Bytes f = encode_message(env);
    REQUIRE(f.size() == kHeaderSize + env.payload.size());
    REQUIRE(decode_message(f) == env);
  }
  const auto sixteen = sample(rng, 16);
  CHECK(encode_message(sixteen).size() == kHeaderSize + 16);
}

TEST_CASE("every single-bit payload flip in a 10^4 corpus is detected") {
  std::mt19937_64 rng(7);
  int detected = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto env = sample(rng, 1 + rng() % 512);
    Bytes f = encode_message(env);
    const std::size_t bit = rng() % (env.payload.size() * 8);
    f[kHeaderSize + bit / 8] ^= std::byte(1u << (bit % 8));
    if (code_of([&] { decode_message(f); }) == ErrorCode::ChecksumMismatch) ++detected;
  }
  CHECK(detected == 10000);
}

TEST_CASE("decode rejects malformed frames with distinct errors") {
  std::mt19937_64 rng(3);
  const auto env = sample(rng, 64);
  const Bytes good = encode_message(env);

  SUBCASE("truncated by one byte") {
    Bytes f(good.begin(), good.end() - 1);
    CHECK(code_of([&] { decode_message(f); }) == ErrorCode::Truncated);
  }
  SUBCASE("shorter than a header") {
    Bytes f(good.begin(), good.begin() + 10);
    CHECK(code_of([&] { decode_message(f); }) == ErrorCode::Truncated);
  }
  SUBCASE("trailing bytes") {
    Bytes f = good;
    f.push_back(std::byte{0});
    CHECK(code_of([&] { decode_message(f); }) == ErrorCode::Truncated);
  }
  SUBCASE("bad magic") {
    Bytes f = good;
    f[0] = std::byte{'X'};
    CHECK(code_of([&] { decode_message(f); }) == ErrorCode::BadMagic);
  }
  SUBCASE("future version") {
    Bytes f = good;
    f[4] = std::byte{2};
    CHECK(code_of([&] { decode_message(f); }) == ErrorCode::UnsupportedVersion);
  }
  SUBCASE("header round trip") {
    FrameHeader h;
    h.source = 5;
    h.dest = kMulticastDest;
    h.tag = 1024;
    h.payload_len = 1ull << 40;
    h.payload_crc = 0xDEADBEEF;
    const auto raw = encode_header(h);
    const auto back = decode_header(raw);
    CHECK(back.source == 5);
    CHECK(back.dest == kMulticastDest);
    CHECK(back.tag == 1024);
    CHECK(back.payload_len == (1ull << 40));
    CHECK(back.payload_crc == 0xDEADBEEF);
  }
}
