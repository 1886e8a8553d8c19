// fcomm: launch file-communicating jobs, inspect layouts, run benchmarks.
//
//   fcomm run <config> [-- program args...]
//   fcomm validate <config>
//   fcomm bench p2p|bcast|agg [--sizes ..] [--np ..] [--nodes ..] [--transport ..]
//                             [--copier-latency-ms ..] [--out csv-path] [--reps 4]

#include <CLI11.hpp>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "fcomm/bench.hpp"
#include "fcomm/collectives.hpp"
#include "fcomm/error.hpp"
#include "fcomm/launcher.hpp"

namespace {

using namespace fcomm;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "16", "64Ki", "1Mi", "4K", "2M", "1G": binary multiples either way.
std::uint64_t parse_size(const std::string& text) {
  std::size_t used = 0;
  const std::uint64_t base = std::stoull(text, &used);
  std::string unit = text.substr(used);
  if (!unit.empty() && unit.back() == 'i') unit.pop_back();
  if (!unit.empty() && (unit.back() == 'B' || unit.back() == 'b')) unit.pop_back();
  if (unit.empty()) return base;
  if (unit == "K" || unit == "k") return base << 10;
  if (unit == "M" || unit == "m") return base << 20;
  if (unit == "G" || unit == "g") return base << 30;
  throw Error(ErrorCode::InvalidArgument, "bad size '" + text + "'");
}

template <typename T>
std::vector<T> parse_numbers(const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(static_cast<T>(parse_size(item)));
  return out;
}

std::vector<std::uint64_t> ladder(std::uint64_t from, std::uint64_t to, std::uint64_t factor) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = from; s <= to; s *= factor) out.push_back(s);
  return out;
}

void print_layout(const NodeLayout& layout, std::ostream& os) {
  os << "workdir  " << layout.workdir.string() << "\n"
     << "hostmap  " << layout.map_file.string() << "\n";
  for (const auto& dir : layout.inbox_dirs) os << "inbox    " << dir.string() << "\n";
  os << "leaders ";
  for (const auto& node : layout.map.nodes()) os << " " << node.value << "=" << leader_of(layout.map, node).value;
  os << "\n# rank node msg_dir\n";
  write_map(layout.map, os);
}

int cmd_run(const std::string& config, const std::vector<std::string>& program) {
  JobSpec spec = load_job_config(config);
  if (!program.empty()) spec.program = program;
  if (spec.workdir.empty()) {
    spec.workdir = std::filesystem::temp_directory_path() / ("fcomm-run-" + std::to_string(::getpid()));
  }
  const JobRun run = run_job(spec);
  for (std::size_t r = 0; r < run.result.ranks.size(); ++r) {
    const auto& o = run.result.ranks[r];
    std::cerr << "rank " << r << ": ";
    if (o.timed_out) {
      std::cerr << "killed at timeout\n";
    } else if (o.term_signal != 0) {
      std::cerr << "signal " << o.term_signal << "\n";
    } else {
      std::cerr << "exit " << o.exit_code << "\n";
    }
  }
  std::cerr << "wall " << run.result.wall_time.count() << " s, residual files " << run.teardown.residual_files
            << "\n";
  return run.result.success ? 0 : 1;
}

int cmd_validate(const std::string& config) {
  JobSpec spec = load_job_config(config);
  if (spec.workdir.empty()) spec.workdir = std::filesystem::temp_directory_path() / "fcomm-validate";
  print_layout(compute_layout(spec), std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2 && std::string(argv[1]) == "worker") return bench::worker_main();

  CLI::App app{"File-based message passing: launcher, layouts and benchmarks"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> program;
  auto* run = app.add_subcommand("run", "Launch a job described by a key=value config file");
  run->add_option("config", config, "Job config file")->required()->check(CLI::ExistingFile);
  run->add_option("program", program, "Program and arguments for every rank (after --)");

  auto* val = app.add_subcommand("validate", "Print the layout a config implies without running anything");
  val->add_option("config", config, "Job config file")->required()->check(CLI::ExistingFile);

  std::string which, sizes, nps, nodes, transports, schemes, out;
  std::uint32_t reps = 4, ranks_per_node = 4;
  std::uint64_t latency_ms = 0, seed = 1;
  auto* bench = app.add_subcommand("bench", "Run a benchmark sweep");
  bench->add_option("benchmark", which, "p2p, bcast or agg")->required()->check(CLI::IsMember({"p2p", "bcast", "agg"}));
  bench->add_option("--sizes", sizes, "Comma-separated message or array sizes (16,64Ki,1Mi,...)");
  bench->add_option("--np", nps, "Comma-separated process counts");
  bench->add_option("--nodes", nodes, "Comma-separated virtual node counts (default: np / ranks-per-node)");
  bench->add_option("--ranks-per-node", ranks_per_node, "Ranks per node when --nodes is not given");
  bench->add_option("--transport", transports, "SharedFs, LocalFs or both (comma-separated)");
  bench->add_option("--schemes", schemes, "bcast schemes: central,node_aware,naive_localfs");
  bench->add_option("--copier-latency-ms", latency_ms, "Injected loopback copy latency");
  bench->add_option("--reps", reps, "Repetitions per configuration");
  bench->add_option("--seed", seed, "Payload seed");
  bench->add_option("--out", out, "CSV output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, program);
    if (*val) return cmd_validate(config);

    bench::SweepSpec spec;
    spec.reps = reps;
    spec.seed = seed;
    spec.ranks_per_node = ranks_per_node;
    spec.copier_latency = std::chrono::milliseconds(latency_ms);
    if (which == "p2p") {
      spec.sizes = sizes.empty() ? ladder(16, 16u << 20, 4) : parse_numbers<std::uint64_t>(sizes);
    } else if (which == "bcast") {
      spec.sizes = sizes.empty() ? std::vector<std::uint64_t>{32} : parse_numbers<std::uint64_t>(sizes);
      spec.nps = nps.empty() ? std::vector<std::uint32_t>{2, 4, 8, 16, 32} : parse_numbers<std::uint32_t>(nps);
    } else {
      spec.sizes = sizes.empty() ? ladder(128u << 10, 8u << 20, 4) : parse_numbers<std::uint64_t>(sizes);
      spec.nps = nps.empty() ? std::vector<std::uint32_t>{1, 2, 4, 8, 16} : parse_numbers<std::uint32_t>(nps);
    }
    if (!nodes.empty()) spec.nodes = parse_numbers<std::uint32_t>(nodes);
    if (!transports.empty()) {
      spec.transports.clear();
      for (const auto& t : split_list(transports)) spec.transports.push_back(parse_transport_mode(t));
    }
    if (!schemes.empty()) {
      spec.schemes.clear();
      for (const auto& s : split_list(schemes)) spec.schemes.push_back(bench::parse_scheme(s));
    }
    spec.worker_command = {std::filesystem::read_symlink("/proc/self/exe").string(), "worker"};

    std::vector<bench::BenchRecord> records;
    if (which == "p2p") {
      records = bench::bench_p2p(spec);
    } else if (which == "bcast") {
      records = bench::bench_bcast(spec);
    } else {
      records = bench::bench_agg(spec);
    }
    if (out.empty()) {
      bench::write_csv(records, std::cout);
    } else {
      bench::write_csv(records, std::filesystem::path(out));
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fcomm: " << e.what() << "\n";
    return 1;
  }
}
