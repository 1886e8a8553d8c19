#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcomm/copier.hpp"
#include "fcomm/p2p.hpp"
#include "fcomm/topology.hpp"

namespace fcomm {

enum class Placement { Contiguous, RoundRobin };

std::string to_string(Placement p);
Placement parse_placement(const std::string& text);

struct JobSpec {
  std::uint32_t np = 1;
  std::uint32_t nodes = 1;
  Placement placement = Placement::Contiguous;
  TransportMode transport = TransportMode::LocalFs;
  CopierConfig copier;
  std::filesystem::path workdir;
  std::vector<std::string> program;  // command and arguments run by every rank
  std::chrono::milliseconds timeout{60000};
  bool keep_files = false;
  std::uint32_t max_ranks_per_node = 0;  // 0 = no cap

  // Real-hosts mode: node names are these hosts instead of virtual nodes,
  // remote ranks start through ssh and files move with the scp copier.
  std::vector<std::string> hosts;

  std::optional<PollPolicy> poll;                    // forwarded to ranks when set
  std::map<std::string, std::string> extra_env;      // forwarded to every rank
  std::optional<std::filesystem::path> output_dir;   // per-rank stdout/stderr files
};

/// Throws InvalidArgument.
void validate(const JobSpec& spec);

/// Parses the key=value job config. Recognised keys: np, nodes, placement,
/// transport, copier.kind, copier.latency_ms, copier.bandwidth_bytes_per_s,
/// copier.stall_ms, copier.connect_timeout_s, workdir, timeout_s, keep_files,
/// max_ranks_per_node, program, hosts.
JobSpec parse_job_config(std::istream& in);
JobSpec load_job_config(const std::filesystem::path& file);

struct NodeLayout {
  std::filesystem::path workdir;
  HostRankMap map;
  std::filesystem::path map_file;
  std::vector<std::filesystem::path> inbox_dirs;  // one per node in use, or the shared dir
};

/// The layout a spec implies, without touching the filesystem.
NodeLayout compute_layout(const JobSpec& spec);

/// compute_layout, then creates the inbox directories and writes the host map.
NodeLayout plan_layout(const JobSpec& spec);

struct JobHandle {
  std::vector<pid_t> pids;  // index = rank
  std::chrono::steady_clock::time_point started;
};

/// Starts one process per rank with FCOMM_* set. If any rank cannot be
/// started the ones already running are killed, the layout is torn down and
/// SpawnFailed is thrown.
JobHandle launch(const JobSpec& spec, const NodeLayout& layout);

struct RankOutcome {
  int exit_code = -1;   // -1 when the process died from a signal
  int term_signal = 0;
  bool timed_out = false;  // killed by wait()
};

struct JobResult {
  bool success = false;
  std::vector<RankOutcome> ranks;
  std::chrono::duration<double> wall_time{};

  bool timed_out() const;
  std::vector<RankId> failed_ranks() const;
};

/// Reaps every rank; ranks still running at `timeout` are killed and marked.
JobResult wait(JobHandle& handle, std::chrono::milliseconds timeout);

struct TeardownReport {
  std::uint64_t residual_files = 0;
  bool removed = false;
};

/// Counts leftover message files, then removes the inbox directories and the
/// host map unless `keep_files`.
TeardownReport teardown(const NodeLayout& layout, bool keep_files = false);

struct JobRun {
  JobResult result;
  TeardownReport teardown;
};

/// plan_layout, launch, wait and teardown in one go.
JobRun run_job(const JobSpec& spec);

/// The environment rank `r` receives (without the inherited parent environment).
std::map<std::string, std::string> rank_environment(const JobSpec& spec, const NodeLayout& layout, RankId r);

}  // namespace fcomm
