#include "fcomm/copier.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <system_error>
#include <thread>

#include "fcomm/error.hpp"
#include "process.hpp"

namespace fcomm {

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

[[noreturn]] void copy_failed(const std::filesystem::path& local, const std::filesystem::path& remote,
                              const std::string& why) {
  throw Error(ErrorCode::CopyFailed, local.string() + " -> " + remote.string() + ": " + why);
}

}  // namespace

std::string to_string(CopierConfig::Kind kind) {
  return kind == CopierConfig::Kind::Scp ? "scp" : "loopback";
}

CopierConfig::Kind parse_copier_kind(const std::string& text) {
  if (text == "scp" || text == "Scp") return CopierConfig::Kind::Scp;
  if (text == "loopback" || text == "Loopback") return CopierConfig::Kind::Loopback;
  throw Error(ErrorCode::InvalidArgument, "unknown copier kind '" + text + "'");
}

std::vector<std::string> ScpCopier::command(const std::filesystem::path& local, const NodeId& node,
                                            const std::filesystem::path& remote) const {
  std::vector<std::string> argv = {config_.scp_program, "-B", "-o",
                                   "ConnectTimeout=" + std::to_string(config_.connect_timeout_s)};
  argv.insert(argv.end(), config_.extra_options.begin(), config_.extra_options.end());
  argv.push_back(local.string());
  argv.push_back(node.value + ":" + remote.string());
  return argv;
}

void ScpCopier::copy(const std::filesystem::path& local, const NodeId& node, const std::filesystem::path& remote) {
  detail::CommandResult result;
  try {
    result = detail::run_command(command(local, node, remote));
  } catch (const std::system_error& e) {
    copy_failed(local, remote, e.what());
  }
  if (result.exit_code != 0) {
    std::string diag = result.diagnostics;
    while (!diag.empty() && (diag.back() == '\n' || diag.back() == '\r')) diag.pop_back();
    copy_failed(local, remote, config_.scp_program + " exited with " + std::to_string(result.exit_code) +
                                   (diag.empty() ? "" : ": " + diag));
  }
}

void LoopbackCopier::copy(const std::filesystem::path& local, const NodeId&, const std::filesystem::path& remote) {
  if (config_.latency.count() > 0) std::this_thread::sleep_for(config_.latency);
  if (config_.stall_before_lock.count() > 0 && remote.extension() == ".lock") {
    std::this_thread::sleep_for(config_.stall_before_lock);
  }

  Fd in(::open(local.c_str(), O_RDONLY | O_CLOEXEC));
  if (in.get() < 0) copy_failed(local, remote, std::strerror(errno));
  Fd out(::open(remote.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (out.get() < 0) copy_failed(local, remote, std::strerror(errno));

  constexpr std::size_t kChunk = 1 << 16;
  std::vector<char> buf(kChunk);
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t written = 0;
  for (;;) {
    const ssize_t n = ::read(in.get(), buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      copy_failed(local, remote, std::strerror(errno));
    }
    if (n == 0) break;
    ssize_t off = 0;
    while (off < n) {
      const ssize_t w = ::write(out.get(), buf.data() + off, static_cast<std::size_t>(n - off));
      if (w < 0) {
        if (errno == EINTR) continue;
        copy_failed(local, remote, std::strerror(errno));
      }
      off += w;
    }
    written += static_cast<std::uint64_t>(n);
    if (config_.bandwidth_bytes_per_s > 0) {
      const auto due = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(static_cast<double>(written) /
                                                                 static_cast<double>(config_.bandwidth_bytes_per_s)));
      std::this_thread::sleep_until(due);
    }
  }
}

std::unique_ptr<Copier> make_copier(const CopierConfig& config) {
  if (config.kind == CopierConfig::Kind::Scp) return std::make_unique<ScpCopier>(config);
  return std::make_unique<LoopbackCopier>(config);
}

}  // namespace fcomm
