#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fcomm/types.hpp"

namespace fcomm {

struct CopierConfig {
  enum class Kind { Scp, Loopback };
  Kind kind = Kind::Loopback;

  // Scp
  std::string scp_program = "scp";
  std::vector<std::string> extra_options;
  int connect_timeout_s = 10;

  // Loopback
  std::chrono::milliseconds latency{0};          // injected per copy call
  std::uint64_t bandwidth_bytes_per_s = 0;       // 0 = uncapped
  std::chrono::milliseconds stall_before_lock{0};  // fault injection between buffer and lock copies
};

std::string to_string(CopierConfig::Kind kind);
CopierConfig::Kind parse_copier_kind(const std::string& text);

/// Moves one file to another node. `copy` returns only once the file is
/// completely present at `remote` on `node`; failures throw CopyFailed.
class Copier {
 public:
  virtual ~Copier() = default;
  virtual void copy(const std::filesystem::path& local, const NodeId& node, const std::filesystem::path& remote) = 0;
};

/// Shells out to `scp` in batch mode. Never prompts.
class ScpCopier final : public Copier {
 public:
  explicit ScpCopier(CopierConfig config) : config_(std::move(config)) {}
  void copy(const std::filesystem::path& local, const NodeId& node, const std::filesystem::path& remote) override;

  /// `scp -B -o ConnectTimeout=<s> [extra...] <local> <node>:<remote>`
  std::vector<std::string> command(const std::filesystem::path& local, const NodeId& node,
                                   const std::filesystem::path& remote) const;

 private:
  CopierConfig config_;
};

/// In-process copy between virtual-node directories on one machine, with
/// injected latency and an optional bandwidth cap. Writes straight into the
/// destination name the way scp does.
class LoopbackCopier final : public Copier {
 public:
  explicit LoopbackCopier(CopierConfig config) : config_(std::move(config)) {}
  void copy(const std::filesystem::path& local, const NodeId& node, const std::filesystem::path& remote) override;

 private:
  CopierConfig config_;
};

std::unique_ptr<Copier> make_copier(const CopierConfig& config);

}  // namespace fcomm
