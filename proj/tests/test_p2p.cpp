#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "fcomm/error.hpp"
#include "fcomm/p2p.hpp"
#include "support.hpp"

using namespace fcomm;
using fcomm::testing::count_entries;
using fcomm::testing::random_bytes;
using fcomm::testing::run_ranks;
using fcomm::testing::test_poll;
using fcomm::testing::VirtualCluster;

namespace {

using Clock = std::chrono::steady_clock;

PollPolicy short_timeout(int ms) {
  PollPolicy p = test_poll();
  p.timeout = std::chrono::milliseconds(ms);
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fcomm::Error");
  return ErrorCode::IoError;
}

// Log-uniform sizes between 16 B and 16 MiB.
std::size_t log_size(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(std::log(16.0), std::log(16.0 * 1024 * 1024));
  return static_cast<std::size_t>(std::exp(d(rng)));
}

}  // namespace

TEST_CASE("poll policy validation and defaults") {
  PollPolicy p;
  CHECK(p.initial == std::chrono::milliseconds(1));
  CHECK(p.max == std::chrono::milliseconds(100));
  CHECK(p.backoff_factor == 2.0);
  CHECK_FALSE(p.timeout.has_value());
  p.validate();
  PollPolicy bad = p;
  bad.backoff_factor = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.max = std::chrono::microseconds(10);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("self send then receive returns the payload") {
  for (auto mode : {TransportMode::SharedFs, TransportMode::LocalFs}) {
    VirtualCluster c(mode, 2, 2);
    auto ctx = c.context(RankId(1));
    const Bytes payload{std::byte{1}, std::byte{2}, std::byte{3}};
    send(ctx, RankId(1), Tag(7), payload);
    CHECK(recv(ctx, RankId(1), Tag(7)) == payload);
    CHECK(ctx.transport().counter().remote_copies == 0);
    CHECK(c.residual_files() == 0);
  }
}

TEST_CASE("same-node send costs no copies, cross-node send costs two") {
  VirtualCluster c(TransportMode::LocalFs, 4, 2);
  auto r3 = c.context(RankId(3));
  auto r2 = c.context(RankId(2));
  send(r3, RankId(2), Tag(0), Bytes(10, std::byte{3}));
  CHECK(r3.transport().counter().remote_copies == 0);
  CHECK(count_entries(r2.transport().inbox_of(RankId(2))) == 2);
  send(r2, RankId(0), Tag(0), Bytes(10, std::byte{2}));
  CHECK(r2.transport().counter().remote_copies == 2);
  auto r0 = c.context(RankId(0));
  CHECK(recv(r0, RankId(2), Tag(0)) == Bytes(10, std::byte{2}));
  CHECK(recv(r2, RankId(3), Tag(0)) == Bytes(10, std::byte{3}));
  CHECK(c.residual_files() == 0);
}

TEST_CASE("recv with no sender times out near the configured timeout") {
  VirtualCluster c(TransportMode::SharedFs, 2, 1);
  auto ctx = c.context(RankId(0), short_timeout(200));
  const auto t0 = Clock::now();
  CHECK(code_of([&] { recv(ctx, RankId(1), Tag(0)); }) == ErrorCode::Timeout);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
  CHECK(ms >= 150);
  CHECK(ms <= 250);
}

TEST_CASE("recv consumes the message") {
  VirtualCluster c(TransportMode::SharedFs, 2, 1);
  auto a = c.context(RankId(0), short_timeout(100));
  auto b = c.context(RankId(1), short_timeout(100));
  send(a, RankId(1), Tag(3), Bytes(4, std::byte{9}));
  CHECK(recv(b, RankId(0), Tag(3)) == Bytes(4, std::byte{9}));
  CHECK(code_of([&] { recv(b, RankId(0), Tag(3)); }) == ErrorCode::Timeout);
  CHECK(b.counters().messages_received == 1);
  CHECK(a.counters().messages_sent == 1);
}

TEST_CASE("keep_consumed leaves the files in place") {
  VirtualCluster c(TransportMode::SharedFs, 2, 1);
  auto a = c.context(RankId(0));
  auto b = c.context(RankId(1));
  b.keep_consumed(true);
  send(a, RankId(1), Tag(3), Bytes(4, std::byte{9}));
  recv(b, RankId(0), Tag(3));
  CHECK(c.residual_files() == 2);
}

TEST_CASE("probe reports pending messages until they are consumed") {
  VirtualCluster c(TransportMode::LocalFs, 2, 2);
  auto a = c.context(RankId(0));
  auto b = c.context(RankId(1));
  CHECK_FALSE(probe(b, RankId(0), Tag(1)));
  CHECK_FALSE(probe(b, RankId(0), Tag(1)));
  send(a, RankId(1), Tag(1), {});
  CHECK(probe(b, RankId(0), Tag(1)));
  CHECK(probe(b, RankId(0), Tag(1)));
  CHECK_FALSE(probe(b, RankId(0), Tag(2)));
  recv(b, RankId(0), Tag(1));
  CHECK_FALSE(probe(b, RankId(0), Tag(1)));
  CHECK_THROWS_AS(probe(b, RankId(2), Tag(1)), Error);
}

TEST_CASE("a header that disagrees with the file name is fatal") {
  VirtualCluster c(TransportMode::SharedFs, 3, 1);
  auto ctx = c.context(RankId(0), short_timeout(1000));
  const auto inbox = ctx.transport().inbox_of(RankId(0));
  const auto pair = message_file_names(RankId(0), RankId(1), Tag(5), inbox);
  {
    const Bytes frame = encode_message({RankId(2), RankId(0), Tag(5), {}});
    std::ofstream f(pair.buffer_path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    std::ofstream lock(pair.lock_path);
  }
  CHECK(code_of([&] { recv(ctx, RankId(1), Tag(5)); }) == ErrorCode::HeaderMismatch);
}

TEST_CASE("a corrupted buffer surfaces as ChecksumMismatch") {
  VirtualCluster c(TransportMode::SharedFs, 2, 1);
  auto a = c.context(RankId(0));
  auto b = c.context(RankId(1));
  const auto pair = a.transport().publish(RankId(0), RankId(1), Tag(0), Bytes(32, std::byte{1}));
  {
    std::fstream f(pair.buffer_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(kHeaderSize + 3));
    f.put('\x7f');
  }
  CHECK(code_of([&] { recv(b, RankId(0), Tag(0)); }) == ErrorCode::ChecksumMismatch);
}

TEST_CASE("poll checks grow logarithmically then linearly in the wait") {
  VirtualCluster c(TransportMode::SharedFs, 2, 1);
  PollPolicy p;
  p.initial = std::chrono::milliseconds(1);
  p.max = std::chrono::milliseconds(20);
  p.timeout = std::chrono::milliseconds(300);
  auto ctx = c.context(RankId(0), p);
  CHECK_THROWS(recv(ctx, RankId(1), Tag(0)));
  // ceil(log2(20/1)) = 5 growth steps, 300/20 = 15 capped steps, plus the
  // first and last checks.
  CHECK(ctx.counters().poll_checks <= 5 + 15 + 2);
  CHECK(ctx.counters().poll_checks >= 5);
}

TEST_CASE("threaded ping-pong over both transports preserves every byte") {
  for (auto mode : {TransportMode::SharedFs, TransportMode::LocalFs}) {
    VirtualCluster c(mode, 2, 2);
    run_ranks(c, [](CommContext& ctx) {
      std::mt19937_64 rng(99);
      for (std::uint32_t i = 0; i < 50; ++i) {
        const Bytes payload = random_bytes(rng, rng() % 100000);
        if (ctx.rank().value == 0) {
          send(ctx, RankId(1), Tag(i), payload);
          REQUIRE(recv(ctx, RankId(1), Tag(i)) == payload);
        } else {
          const Bytes got = recv(ctx, RankId(0), Tag(i));
          REQUIRE(got == payload);
          send(ctx, RankId(0), Tag(i), got);
        }
      }
    });
    CHECK(c.residual_files() == 0);
  }
}

TEST_CASE("two processes exchange 200 random payloads from 16 B to 16 MiB") {
  VirtualCluster c(TransportMode::LocalFs, 2, 2);
  constexpr std::uint64_t kSeed = 2024;
  const pid_t child = ::fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    int rc = 0;
    try {
      auto ctx = c.context(RankId(1));
      std::mt19937_64 rng(kSeed);
      for (std::uint32_t i = 0; i < 200; ++i) send(ctx, RankId(0), Tag(i), random_bytes(rng, log_size(rng)));
    } catch (...) {
      rc = 1;
    }
    ::_exit(rc);
  }
  auto ctx = c.context(RankId(0));
  std::mt19937_64 rng(kSeed);
  int mismatches = 0;
  for (std::uint32_t i = 0; i < 200; ++i) {
    const Bytes expected = random_bytes(rng, log_size(rng));
    if (recv(ctx, RankId(1), Tag(i)) != expected) ++mismatches;
  }
  int status = 0;
  ::waitpid(child, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(mismatches == 0);
  CHECK(c.residual_files() == 0);
}
