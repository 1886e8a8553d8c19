#include "fcomm/launcher.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include "fcomm/collectives.hpp"
#include "fcomm/environment.hpp"
#include "fcomm/error.hpp"
#include "process.hpp"

namespace fcomm {

namespace {

using Clock = std::chrono::steady_clock;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size() || value.front() == '-') throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, key + "=" + value + " is not a non-negative integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw Error(ErrorCode::InvalidArgument, key + "=" + value + " is not a boolean");
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string local_hostname() {
  char buf[256] = {};
  if (::gethostname(buf, sizeof buf - 1) != 0) return "localhost";
  return buf;
}

bool is_local_host(const std::string& host) {
  return host == "localhost" || host == "127.0.0.1" || host == local_hostname();
}

std::uint32_t node_index(const JobSpec& spec, std::uint32_t r) {
  if (spec.placement == Placement::RoundRobin) return r % spec.nodes;
  std::uint32_t node = 0;
  while (block_offset(spec.np, spec.nodes, node + 1) <= r) ++node;
  return node;
}

std::string node_label(const JobSpec& spec, std::uint32_t index) {
  return spec.hosts.empty() ? "vnode" + std::to_string(index) : spec.hosts[index];
}

void kill_group(pid_t pid) {
  ::kill(-pid, SIGKILL);
  ::kill(pid, SIGKILL);
}

RankOutcome outcome_of(int status) {
  RankOutcome o;
  if (WIFEXITED(status)) {
    o.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    o.term_signal = WTERMSIG(status);
  }
  return o;
}

std::uint64_t count_files(const std::filesystem::path& dir) {
  std::uint64_t n = 0;
  std::error_code ec;
  for (auto it = std::filesystem::recursive_directory_iterator(dir, ec);
       !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
    std::error_code sec;
    if (it->is_symlink(sec) || it->is_regular_file(sec)) ++n;
  }
  return n;
}

}  // namespace

std::string to_string(Placement p) { return p == Placement::Contiguous ? "contiguous" : "round_robin"; }

Placement parse_placement(const std::string& text) {
  if (text == "contiguous") return Placement::Contiguous;
  if (text == "round_robin" || text == "round-robin" || text == "roundrobin") return Placement::RoundRobin;
  throw Error(ErrorCode::InvalidArgument, "unknown placement '" + text + "'");
}

void validate(const JobSpec& spec) {
  if (spec.np == 0) throw Error(ErrorCode::InvalidArgument, "np must be at least 1");
  if (spec.nodes == 0) throw Error(ErrorCode::InvalidArgument, "nodes must be at least 1");
  if (!spec.hosts.empty() && spec.hosts.size() != spec.nodes) {
    throw Error(ErrorCode::InvalidArgument, "hosts lists " + std::to_string(spec.hosts.size()) +
                                                " names for " + std::to_string(spec.nodes) + " nodes");
  }
  if (spec.workdir.empty()) throw Error(ErrorCode::InvalidArgument, "workdir is required");
  if (spec.timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
  if (spec.max_ranks_per_node > 0) {
    const std::uint32_t busiest = (spec.np + spec.nodes - 1) / spec.nodes;
    if (busiest > spec.max_ranks_per_node) {
      throw Error(ErrorCode::InvalidArgument, std::to_string(busiest) + " ranks per node exceeds the cap of " +
                                                  std::to_string(spec.max_ranks_per_node));
    }
  }
  if (spec.poll) spec.poll->validate();
}

JobSpec parse_job_config(std::istream& in) {
  JobSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "np") {
      spec.np = static_cast<std::uint32_t>(parse_count(key, value));
    } else if (key == "nodes") {
      spec.nodes = static_cast<std::uint32_t>(parse_count(key, value));
    } else if (key == "placement") {
      spec.placement = parse_placement(value);
    } else if (key == "transport") {
      spec.transport = parse_transport_mode(value);
    } else if (key == "copier.kind") {
      spec.copier.kind = parse_copier_kind(value);
    } else if (key == "copier.latency_ms") {
      spec.copier.latency = std::chrono::milliseconds(parse_count(key, value));
    } else if (key == "copier.bandwidth_bytes_per_s") {
      spec.copier.bandwidth_bytes_per_s = parse_count(key, value);
    } else if (key == "copier.stall_ms") {
      spec.copier.stall_before_lock = std::chrono::milliseconds(parse_count(key, value));
    } else if (key == "copier.connect_timeout_s") {
      spec.copier.connect_timeout_s = static_cast<int>(parse_count(key, value));
    } else if (key == "workdir") {
      spec.workdir = value;
    } else if (key == "timeout_s") {
      spec.timeout = std::chrono::milliseconds(parse_count(key, value) * 1000);
    } else if (key == "keep_files") {
      spec.keep_files = parse_bool(key, value);
    } else if (key == "max_ranks_per_node") {
      spec.max_ranks_per_node = static_cast<std::uint32_t>(parse_count(key, value));
    } else if (key == "program") {
      spec.program = split_words(value);
    } else if (key == "hosts") {
      std::string list = value;
      std::replace(list.begin(), list.end(), ',', ' ');
      spec.hosts = split_words(list);
    } else {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return spec;
}

JobSpec load_job_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open job config " + file.string());
  return parse_job_config(in);
}

NodeLayout compute_layout(const JobSpec& spec) {
  validate(spec);
  NodeLayout layout;
  layout.workdir = std::filesystem::absolute(spec.workdir).lexically_normal();
  layout.map_file = layout.workdir / "hostmap.txt";

  const auto shared = layout.workdir / "shared";
  std::vector<RankPlacement> entries;
  entries.reserve(spec.np);
  std::vector<bool> used(spec.nodes, false);
  for (std::uint32_t r = 0; r < spec.np; ++r) {
    const auto i = node_index(spec, r);
    used[i] = true;
    const auto label = node_label(spec, i);
    entries.push_back({NodeId(label), spec.transport == TransportMode::SharedFs ? shared : layout.workdir / label});
  }
  layout.map = HostRankMap(std::move(entries));

  if (spec.transport == TransportMode::SharedFs) {
    layout.inbox_dirs.push_back(shared);
  } else {
    for (std::uint32_t i = 0; i < spec.nodes; ++i) {
      if (used[i]) layout.inbox_dirs.push_back(layout.workdir / node_label(spec, i));
    }
  }
  return layout;
}

NodeLayout plan_layout(const JobSpec& spec) {
  NodeLayout layout = compute_layout(spec);
  std::error_code ec;
  std::filesystem::create_directories(layout.workdir, ec);
  if (ec) throw Error(ErrorCode::IoError, "create " + layout.workdir.string() + ": " + ec.message());
  for (const auto& dir : layout.inbox_dirs) {
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "create " + dir.string() + ": " + ec.message());
  }
  write_map(layout.map, layout.map_file);

  for (const auto& host : spec.hosts) {
    if (is_local_host(host)) continue;
    const auto dir = layout.workdir / host;
    auto r = detail::run_command({"ssh", "-o", "BatchMode=yes", host, "mkdir", "-p", dir.string()});
    if (r.exit_code != 0) throw Error(ErrorCode::IoError, "ssh mkdir on " + host + ": " + r.diagnostics);
    r = detail::run_command({"scp", "-B", layout.map_file.string(), host + ":" + layout.map_file.string()});
    if (r.exit_code != 0) throw Error(ErrorCode::IoError, "scp host map to " + host + ": " + r.diagnostics);
  }
  return layout;
}

std::map<std::string, std::string> rank_environment(const JobSpec& spec, const NodeLayout& layout, RankId r) {
  std::map<std::string, std::string> env = spec.extra_env;
  env[env::kRank] = std::to_string(r.value);
  env[env::kNp] = std::to_string(spec.np);
  env[env::kMapFile] = layout.map_file.string();
  env[env::kMsgDir] = layout.map.msg_dir(r).string();
  env[env::kTransport] = to_string(spec.transport);
  env[env::kCopier] = to_string(spec.copier.kind);
  env[env::kCopierLatencyMs] = std::to_string(spec.copier.latency.count());
  env[env::kCopierBandwidth] = std::to_string(spec.copier.bandwidth_bytes_per_s);
  env[env::kCopierStallMs] = std::to_string(spec.copier.stall_before_lock.count());
  env[env::kScpConnectTimeout] = std::to_string(spec.copier.connect_timeout_s);
  if (spec.poll) {
    env[env::kPollInitialUs] = std::to_string(spec.poll->initial.count());
    env[env::kPollMaxUs] = std::to_string(spec.poll->max.count());
    if (spec.poll->timeout) env[env::kPollTimeoutMs] = std::to_string(spec.poll->timeout->count());
  }
  env[env::kKeepFiles] = spec.keep_files ? "1" : "0";
  return env;
}

JobHandle launch(const JobSpec& spec, const NodeLayout& layout) {
  auto fail = [&](const std::string& why, const std::vector<pid_t>& started) -> JobHandle {
    for (pid_t pid : started) kill_group(pid);
    for (pid_t pid : started) {
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
    teardown(layout, false);
    throw Error(ErrorCode::SpawnFailed, why);
  };

  if (spec.program.empty()) return fail("no program given", {});
  if (spec.hosts.empty() && !detail::find_executable(spec.program.front())) {
    return fail("program '" + spec.program.front() + "' not found or not executable", {});
  }
  if (spec.output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*spec.output_dir, ec);
  }

  std::vector<std::string> inherited;
  for (auto& kv : detail::current_environment()) {
    if (!kv.starts_with("FCOMM_")) inherited.push_back(std::move(kv));
  }

  JobHandle handle;
  handle.started = Clock::now();
  for (std::uint32_t r = 0; r < spec.np; ++r) {
    const auto vars = rank_environment(spec, layout, RankId(r));
    detail::SpawnOptions options;
    options.env = inherited;
    for (const auto& [k, v] : vars) options.env.push_back(k + "=" + v);
    if (spec.output_dir) options.output = *spec.output_dir / ("rank" + std::to_string(r) + ".log");

    std::vector<std::string> argv = spec.program;
    const std::string& node = layout.map.node_of(RankId(r)).value;
    if (!spec.hosts.empty() && !is_local_host(node)) {
      argv = {"ssh", "-o", "BatchMode=yes", node, "env"};
      for (const auto& [k, v] : vars) argv.push_back(k + "=" + v);
      argv.insert(argv.end(), spec.program.begin(), spec.program.end());
    }
    try {
      handle.pids.push_back(detail::spawn(argv, options));
    } catch (const std::system_error& e) {
      return fail("rank " + std::to_string(r) + ": " + e.what(), handle.pids);
    }
  }
  return handle;
}

bool JobResult::timed_out() const {
  return std::any_of(ranks.begin(), ranks.end(), [](const RankOutcome& o) { return o.timed_out; });
}

std::vector<RankId> JobResult::failed_ranks() const {
  std::vector<RankId> out;
  for (std::uint32_t r = 0; r < ranks.size(); ++r) {
    if (ranks[r].timed_out || ranks[r].exit_code != 0) out.emplace_back(r);
  }
  return out;
}

JobResult wait(JobHandle& handle, std::chrono::milliseconds timeout) {
  JobResult result;
  result.ranks.resize(handle.pids.size());
  std::vector<bool> reaped(handle.pids.size(), false);
  std::size_t remaining = handle.pids.size();
  const auto deadline = handle.started + timeout;

  while (remaining > 0) {
    for (std::size_t r = 0; r < handle.pids.size(); ++r) {
      if (reaped[r]) continue;
      int status = 0;
      const pid_t got = ::waitpid(handle.pids[r], &status, WNOHANG);
      if (got == handle.pids[r] || (got < 0 && errno == ECHILD)) {
        if (got > 0) result.ranks[r] = outcome_of(status);
        reaped[r] = true;
        --remaining;
      }
    }
    if (remaining == 0) break;
    if (Clock::now() >= deadline) {
      for (std::size_t r = 0; r < handle.pids.size(); ++r) {
        if (reaped[r]) continue;
        kill_group(handle.pids[r]);
        int status = 0;
        ::waitpid(handle.pids[r], &status, 0);
        result.ranks[r] = outcome_of(status);
        result.ranks[r].timed_out = true;
        reaped[r] = true;
      }
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  result.wall_time = Clock::now() - handle.started;
  result.success = result.failed_ranks().empty();
  return result;
}

TeardownReport teardown(const NodeLayout& layout, bool keep_files) {
  TeardownReport report;
  for (const auto& dir : layout.inbox_dirs) report.residual_files += count_files(dir);
  if (keep_files) return report;

  std::error_code ec;
  for (const auto& dir : layout.inbox_dirs) {
    std::filesystem::remove_all(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "remove " + dir.string() + ": " + ec.message());
  }
  std::filesystem::remove(layout.map_file, ec);
  if (std::filesystem::is_empty(layout.workdir, ec) && !ec) std::filesystem::remove(layout.workdir, ec);
  report.removed = true;
  return report;
}

JobRun run_job(const JobSpec& spec) {
  const NodeLayout layout = plan_layout(spec);
  JobRun run;
  try {
    JobHandle handle = launch(spec, layout);
    run.result = wait(handle, spec.timeout);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SpawnFailed) teardown(layout, false);
    throw;
  }
  run.teardown = teardown(layout, spec.keep_files);
  return run;
}

}  // namespace fcomm
