#pragma once

// Shared fixtures: scratch directories, in-process virtual clusters whose
// ranks run on threads, and small generators.

#include <unistd.h>

#include <atomic>
#include <cstring>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fcomm/launcher.hpp"
#include "fcomm/p2p.hpp"

namespace fcomm::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& stem = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fcomm-test-" + stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline PollPolicy test_poll() {
  PollPolicy p;
  p.initial = std::chrono::microseconds(50);
  p.max = std::chrono::microseconds(2000);
  p.timeout = std::chrono::milliseconds(60000);
  return p;
}

/// Inbox directories and a host map built through the launcher's planner;
/// rank contexts are created on demand and share only the filesystem.
class VirtualCluster {
 public:
  VirtualCluster(TransportMode mode, std::uint32_t np, std::uint32_t nodes,
                 Placement placement = Placement::Contiguous, CopierConfig copier = {})
      : dir_("cluster"), mode_(mode), copier_(copier) {
    spec_.np = np;
    spec_.nodes = nodes;
    spec_.placement = placement;
    spec_.transport = mode;
    spec_.copier = copier;
    spec_.workdir = dir_.path() / "job";
    layout_ = plan_layout(spec_);
  }

  const HostRankMap& map() const { return layout_.map; }
  const NodeLayout& layout() const { return layout_; }
  std::uint32_t np() const { return spec_.np; }
  TransportMode mode() const { return mode_; }

  Transport transport() const {
    return Transport(mode_, layout_.map, mode_ == TransportMode::LocalFs ? make_copier(copier_) : nullptr);
  }

  CommContext context(RankId r, PollPolicy poll = test_poll()) const { return CommContext(r, transport(), poll); }

  std::uint64_t residual_files() const { return teardown(layout_, true).residual_files; }

 private:
  TempDir dir_;
  TransportMode mode_;
  CopierConfig copier_;
  JobSpec spec_;
  NodeLayout layout_;
};

/// Runs `body` once per rank on its own thread; rethrows the first failure.
inline void run_ranks(const VirtualCluster& cluster, const std::function<void(CommContext&)>& body,
                      PollPolicy poll = test_poll()) {
  std::vector<std::thread> threads;
  std::exception_ptr first;
  std::mutex mu;
  for (std::uint32_t r = 0; r < cluster.np(); ++r) {
    threads.emplace_back([&, r] {
      try {
        CommContext ctx = cluster.context(RankId(r), poll);
        body(ctx);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const std::uint64_t w = rng();
    std::memcpy(out.data() + i, &w, 8);
  }
  for (; i < n; ++i) out[i] = static_cast<std::byte>(rng() & 0xFF);
  return out;
}

inline std::uint64_t count_entries(const std::filesystem::path& dir) {
  std::uint64_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++n;
  }
  return n;
}

}  // namespace fcomm::testing
