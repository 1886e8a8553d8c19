#include <doctest.h>

#include <csignal>
#include <fstream>
#include <map>
#include <sstream>

#include "fcomm/error.hpp"
#include "fcomm/launcher.hpp"
#include "support.hpp"

#ifndef FCOMM_RANK_PROBE
#error "FCOMM_RANK_PROBE must name the rank_probe helper"
#endif

using namespace fcomm;
using fcomm::testing::TempDir;

namespace {

JobSpec base_spec(const TempDir& dir, std::uint32_t np, std::uint32_t nodes) {
  JobSpec spec;
  spec.np = np;
  spec.nodes = nodes;
  spec.workdir = dir.path() / "job";
  spec.timeout = std::chrono::seconds(30);
  return spec;
}

std::map<std::string, std::string> read_env_file(const std::filesystem::path& file) {
  std::map<std::string, std::string> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::vector<std::size_t> block_sizes(const HostRankMap& m) {
  std::vector<std::size_t> sizes;
  for (const auto& n : m.nodes()) sizes.push_back(node_peers(m, leader_of(m, n)).size());
  return sizes;
}

}  // namespace

TEST_CASE("placement names") {
  CHECK(parse_placement("contiguous") == Placement::Contiguous);
  CHECK(parse_placement("round_robin") == Placement::RoundRobin);
  CHECK(to_string(Placement::RoundRobin) == "round_robin");
  CHECK_THROWS_AS(parse_placement("diagonal"), Error);
}

TEST_CASE("contiguous layout of eight ranks on four nodes") {
  TempDir dir("layout");
  const auto spec = base_spec(dir, 8, 4);
  const auto layout = plan_layout(spec);
  CHECK(layout.inbox_dirs.size() == 4);
  for (const auto& d : layout.inbox_dirs) CHECK(std::filesystem::is_directory(d));
  CHECK(load_map(layout.map_file) == layout.map);
  for (std::uint32_t r = 0; r < 8; ++r) CHECK(layout.map.node_of(RankId(r)).value == "vnode" + std::to_string(r / 2));
  std::vector<std::uint32_t> leaders;
  for (const auto& n : layout.map.nodes()) leaders.push_back(leader_of(layout.map, n).value);
  CHECK(leaders == std::vector<std::uint32_t>{0, 2, 4, 6});
  CHECK(layout.map.msg_dir(RankId(3)) == layout.workdir / "vnode1");
}

TEST_CASE("one node puts every rank in one inbox") {
  TempDir dir("layout");
  const auto layout = plan_layout(base_spec(dir, 8, 1));
  CHECK(layout.inbox_dirs.size() == 1);
  for (std::uint32_t r = 0; r < 8; ++r) CHECK(layout.map.msg_dir(RankId(r)) == layout.inbox_dirs[0]);
}

TEST_CASE("SharedFs uses one shared directory regardless of nodes") {
  TempDir dir("layout");
  auto spec = base_spec(dir, 6, 3);
  spec.transport = TransportMode::SharedFs;
  const auto layout = plan_layout(spec);
  CHECK(layout.inbox_dirs == std::vector<std::filesystem::path>{spec.workdir / "shared"});
  CHECK(layout.map.nodes().size() == 3);
}

TEST_CASE("balanced contiguous blocks") {
  TempDir dir("layout");
  CHECK(block_sizes(compute_layout(base_spec(dir, 7, 3)).map) == std::vector<std::size_t>{3, 2, 2});
  for (std::uint32_t np = 1; np <= 20; ++np) {
    for (std::uint32_t nodes = 1; nodes <= 6; ++nodes) {
      const auto m = compute_layout(base_spec(dir, np, nodes)).map;
      const auto sizes = block_sizes(m);
      // node count, balance and contiguity checked from the map itself
      CHECK(sizes.size() == std::min(np, nodes));
      CHECK(std::is_sorted(sizes.rbegin(), sizes.rend()));
      CHECK(sizes.front() - sizes.back() <= 1);
      for (std::uint32_t r = 1; r < np; ++r) {
        if (m.node_of(RankId(r)) != m.node_of(RankId(r - 1))) CHECK(leader_of(m, m.node_of(RankId(r))) == RankId(r));
      }
    }
  }
}

TEST_CASE("round-robin placement") {
  TempDir dir("layout");
  auto spec = base_spec(dir, 6, 3);
  spec.placement = Placement::RoundRobin;
  const auto m = compute_layout(spec).map;
  for (std::uint32_t r = 0; r < 6; ++r) CHECK(m.node_of(RankId(r)).value == "vnode" + std::to_string(r % 3));
}

TEST_CASE("identical specs give identical host maps; distinct workdirs never share inboxes") {
  TempDir a("layout"), b("layout");
  const auto s1 = base_spec(a, 9, 4);
  CHECK(compute_layout(s1).map == compute_layout(s1).map);
  const auto l1 = compute_layout(s1);
  const auto l2 = compute_layout(base_spec(b, 9, 4));
  for (const auto& d1 : l1.inbox_dirs) {
    for (const auto& d2 : l2.inbox_dirs) CHECK(d1 != d2);
  }
}

TEST_CASE("job spec validation") {
  TempDir dir("spec");
  auto spec = base_spec(dir, 0, 1);
  CHECK_THROWS_AS(validate(spec), Error);
  spec.np = 4;
  spec.nodes = 0;
  CHECK_THROWS_AS(validate(spec), Error);
  spec.nodes = 1;
  spec.max_ranks_per_node = 2;
  CHECK_THROWS_AS(validate(spec), Error);
  spec.nodes = 2;
  validate(spec);
}

TEST_CASE("config parsing") {
  std::istringstream in(
      "# job\n"
      "np = 6\n"
      "nodes=3\n"
      "placement=round_robin\n"
      "transport=SharedFs\n"
      "copier.kind=loopback\n"
      "copier.latency_ms=5\n"
      "workdir=/tmp/fcomm-x\n"
      "timeout_s=7\n"
      "keep_files=true\n"
      "program=/bin/echo hello world\n");
  const auto spec = parse_job_config(in);
  CHECK(spec.np == 6);
  CHECK(spec.nodes == 3);
  CHECK(spec.placement == Placement::RoundRobin);
  CHECK(spec.transport == TransportMode::SharedFs);
  CHECK(spec.copier.latency == std::chrono::milliseconds(5));
  CHECK(spec.workdir == "/tmp/fcomm-x");
  CHECK(spec.timeout == std::chrono::seconds(7));
  CHECK(spec.keep_files);
  CHECK(spec.program == std::vector<std::string>{"/bin/echo", "hello", "world"});

  std::istringstream bad("np=4\nfrobnicate=1\n");
  CHECK_THROWS_AS(parse_job_config(bad), Error);
  std::istringstream neg("np=-1\n");
  CHECK_THROWS_AS(parse_job_config(neg), Error);
}

TEST_CASE("every rank receives consistent FCOMM variables") {
  TempDir dir("env");
  auto spec = base_spec(dir, 4, 2);
  spec.keep_files = true;
  const auto out = dir.path() / "out";
  std::filesystem::create_directories(out);
  spec.program = {FCOMM_RANK_PROBE, "env", out.string()};
  const auto run = run_job(spec);
  REQUIRE(run.result.success);
  const auto map = load_map(spec.workdir / "hostmap.txt");
  for (std::uint32_t r = 0; r < 4; ++r) {
    const auto env = read_env_file(out / ("rank" + std::to_string(r) + ".env"));
    CHECK(env.at("FCOMM_RANK") == std::to_string(r));
    CHECK(env.at("FCOMM_NP") == "4");
    CHECK(env.at("FCOMM_MAP_FILE") == (spec.workdir / "hostmap.txt").string());
    CHECK(env.at("FCOMM_MSG_DIR") == map.msg_dir(RankId(r)).string());
    CHECK(env.at("FCOMM_TRANSPORT") == to_string(TransportMode::LocalFs));
    CHECK(env.at("PGID_IS_PID") == "1");
    CHECK(std::filesystem::is_directory(map.msg_dir(RankId(r))));
  }
}

TEST_CASE("ranks run as real processes and exchange messages") {
  for (auto mode : {TransportMode::SharedFs, TransportMode::LocalFs}) {
    TempDir dir("ring");
    auto spec = base_spec(dir, 5, 2);
    spec.transport = mode;
    spec.program = {FCOMM_RANK_PROBE, "ring", "100000"};
    const auto run = run_job(spec);
    CHECK(run.result.success);
    CHECK(run.teardown.residual_files == 0);
    CHECK(run.teardown.removed);
    CHECK_FALSE(std::filesystem::exists(spec.workdir));
  }
}

TEST_CASE("a failing rank is identified") {
  TempDir dir("fail");
  auto spec = base_spec(dir, 3, 1);
  spec.program = {FCOMM_RANK_PROBE, "exit", "1", "1"};
  const auto run = run_job(spec);
  CHECK_FALSE(run.result.success);
  CHECK(run.result.failed_ranks() == std::vector<RankId>{RankId(1)});
  CHECK(run.result.ranks[1].exit_code == 1);
  CHECK(run.result.ranks[0].exit_code == 0);
  CHECK(run.result.wall_time.count() > 0);
  CHECK_FALSE(std::filesystem::exists(spec.workdir));
}

TEST_CASE("a hung rank is killed at the timeout") {
  TempDir dir("hang");
  auto spec = base_spec(dir, 3, 2);
  spec.timeout = std::chrono::seconds(2);
  spec.program = {FCOMM_RANK_PROBE, "hang", "2"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = run_job(spec);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed < std::chrono::milliseconds(2500));
  CHECK(elapsed >= std::chrono::milliseconds(2000));
  CHECK(run.result.timed_out());
  CHECK(run.result.ranks[2].timed_out);
  CHECK(run.result.ranks[2].term_signal == SIGKILL);
  CHECK_FALSE(run.result.ranks[0].timed_out);
  CHECK(run.result.failed_ranks() == std::vector<RankId>{RankId(2)});
  CHECK_FALSE(std::filesystem::exists(spec.workdir));
}

TEST_CASE("a missing program fails before any rank runs and cleans up") {
  TempDir dir("spawn");
  auto spec = base_spec(dir, 2, 2);
  spec.program = {(dir.path() / "no-such-program").string()};
  try {
    run_job(spec);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpawnFailed);
  }
  CHECK_FALSE(std::filesystem::exists(spec.workdir));
}

TEST_CASE("keep_files preserves directories and reports leftovers") {
  TempDir dir("keep");
  auto spec = base_spec(dir, 2, 2);
  const auto layout = plan_layout(spec);
  std::ofstream(layout.inbox_dirs[0] / "msg_d0_s1_t0.buf") << "x";
  const auto kept = teardown(layout, true);
  CHECK(kept.residual_files == 1);
  CHECK_FALSE(kept.removed);
  CHECK(std::filesystem::is_directory(layout.inbox_dirs[1]));
  const auto gone = teardown(layout, false);
  CHECK(gone.residual_files == 1);
  CHECK(gone.removed);
  CHECK_FALSE(std::filesystem::exists(layout.workdir));
}
