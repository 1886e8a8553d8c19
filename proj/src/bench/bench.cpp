#include "fcomm/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <tuple>

#include "fcomm/error.hpp"
#include "fcomm/launcher.hpp"
#include "worker_protocol.hpp"

namespace fcomm::bench {

namespace {

using json = nlohmann::json;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::filesystem::path unique_dir(const std::filesystem::path& root, const std::string& stem) {
  static std::atomic<std::uint64_t> counter{0};
  return root / ("fcomm-" + stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
}

struct RankResults {
  std::vector<json> ranks;  // index = rank
};

// Runs one benchmark job and returns every rank's result file. Any rank
// failure, integrity failure or leftover message file is an error: a
// benchmark that moved wrong data never reports a time.
RankResults run_worker_job(const SweepSpec& spec, const WorkerConfig& base, std::uint32_t np, std::uint32_t nodes,
                           TransportMode transport) {
  const auto root = spec.workdir_root.empty() ? std::filesystem::temp_directory_path() : spec.workdir_root;
  WorkerConfig cfg = base;
  cfg.results_dir = unique_dir(root, "results");
  std::filesystem::create_directories(cfg.results_dir);
  const auto config_file = cfg.results_dir / "worker.json";
  save_worker_config(cfg, config_file);

  JobSpec job;
  job.np = np;
  job.nodes = nodes;
  job.placement = Placement::Contiguous;
  job.transport = transport;
  job.copier.kind = CopierConfig::Kind::Loopback;
  job.copier.latency = spec.copier_latency;
  job.workdir = unique_dir(root, "job");
  job.program = spec.worker_command;
  if (job.program.empty()) {
    job.program = {std::filesystem::read_symlink("/proc/self/exe").string(), "worker"};
  }
  job.timeout = spec.job_timeout;
  PollPolicy poll;
  poll.initial = spec.poll_initial;
  poll.max = spec.poll_max;
  poll.timeout = std::chrono::duration_cast<std::chrono::milliseconds>(spec.job_timeout);
  job.poll = poll;
  job.extra_env[kBenchConfigEnv] = config_file.string();

  RankResults out;
  std::string failure;
  try {
    const JobRun run = run_job(job);
    for (std::uint32_t r = 0; r < np; ++r) {
      std::ifstream f(cfg.results_dir / ("rank" + std::to_string(r) + ".json"));
      json j = f ? json::parse(f, nullptr, false) : json();
      if (j.is_discarded() || j.is_null()) {
        failure = "rank " + std::to_string(r) + " wrote no results";
        break;
      }
      if (!j.value("ok", false)) {
        failure = "rank " + std::to_string(r) + ": " + j.value("error", std::string("failed"));
        break;
      }
      out.ranks.push_back(std::move(j));
    }
    if (failure.empty() && !run.result.success) {
      failure = run.result.timed_out() ? "job timed out" : "a rank exited with an error";
    }
    if (failure.empty() && run.teardown.residual_files != 0) {
      failure = std::to_string(run.teardown.residual_files) + " message files left behind";
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }
  std::error_code ec;
  std::filesystem::remove_all(cfg.results_dir, ec);
  if (!failure.empty()) {
    throw Error(ErrorCode::InvalidArgument, base.benchmark + " benchmark (np=" + std::to_string(np) + ", nodes=" +
                                                std::to_string(nodes) + ", " + to_string(transport) + "): " + failure);
  }
  return out;
}

// Sum of every rank's copies per repetition; must not vary across repetitions.
std::uint64_t copies_per_rep(const RankResults& res, std::size_t entry, std::uint32_t reps) {
  std::vector<std::uint64_t> per_rep(reps, 0);
  for (const auto& rank : res.ranks) {
    const auto copies = rank["entries"][entry]["copies"].get<std::vector<std::uint64_t>>();
    for (std::uint32_t k = 0; k < reps && k < copies.size(); ++k) per_rep[k] += copies[k];
  }
  if (std::adjacent_find(per_rep.begin(), per_rep.end(), std::not_equal_to<>()) != per_rep.end()) {
    throw Error(ErrorCode::InvalidArgument, "remote copy count varied across repetitions");
  }
  return per_rep.empty() ? 0 : per_rep.front();
}

std::uint32_t auto_nodes(const SweepSpec& spec, std::uint32_t np) {
  return std::max<std::uint32_t>(1, (np + spec.ranks_per_node - 1) / spec.ranks_per_node);
}

std::vector<std::uint32_t> node_counts(const SweepSpec& spec, std::uint32_t np) {
  return spec.nodes.empty() ? std::vector<std::uint32_t>{auto_nodes(spec, np)} : spec.nodes;
}

BenchRecord make_record(Benchmark b, TransportMode t, std::string scheme, std::uint32_t np, std::uint32_t nodes,
                        std::uint64_t bytes, std::vector<double> times) {
  BenchRecord rec;
  rec.benchmark = b;
  rec.transport = t;
  rec.scheme = std::move(scheme);
  rec.np = np;
  rec.nodes = nodes;
  rec.msg_bytes = bytes;
  rec.repetitions = static_cast<std::uint32_t>(times.size());
  rec.times_s = std::move(times);
  rec.median_s = median(rec.times_s);
  return rec;
}

}  // namespace

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::P2p: return "p2p";
    case Benchmark::Bcast: return "bcast";
    case Benchmark::Agg: return "agg";
  }
  return "?";
}

std::string to_string(BcastScheme s) {
  switch (s) {
    case BcastScheme::Central: return "central";
    case BcastScheme::NodeAware: return "node_aware";
    case BcastScheme::NaiveLocalFs: return "naive_localfs";
  }
  return "?";
}

BcastScheme parse_scheme(const std::string& text) {
  if (text == "central") return BcastScheme::Central;
  if (text == "node_aware") return BcastScheme::NodeAware;
  if (text == "naive_localfs") return BcastScheme::NaiveLocalFs;
  throw Error(ErrorCode::InvalidArgument, "unknown broadcast scheme '" + text + "'");
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "median of no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

void SweepSpec::validate() const {
  if (reps == 0) throw Error(ErrorCode::InvalidArgument, "repetitions must be at least 1");
  if (sizes.empty()) throw Error(ErrorCode::InvalidArgument, "no message sizes");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw Error(ErrorCode::InvalidArgument, "message sizes must strictly increase");
  }
  if (std::find(nps.begin(), nps.end(), 0u) != nps.end()) throw Error(ErrorCode::InvalidArgument, "np must be >= 1");
  if (std::find(nodes.begin(), nodes.end(), 0u) != nodes.end()) {
    throw Error(ErrorCode::InvalidArgument, "node counts must be >= 1");
  }
  if (ranks_per_node == 0) throw Error(ErrorCode::InvalidArgument, "ranks_per_node must be >= 1");
  if (transports.empty()) throw Error(ErrorCode::InvalidArgument, "no transports selected");
}

Bytes make_payload(std::uint64_t seed, std::uint64_t stream, std::size_t size) {
  std::uint64_t state = seed * 0x2545F4914F6CDD1Dull ^ (stream + 1) * 0x9E3779B97F4A7C15ull;
  Bytes out(size);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    const std::uint64_t w = splitmix64(state);
    std::memcpy(out.data() + i, &w, 8);
  }
  if (i < size) {
    const std::uint64_t w = splitmix64(state);
    std::memcpy(out.data() + i, &w, size - i);
  }
  return out;
}

Bytes bcast_naive_localfs(CommContext& ctx, RankId root, Tag tag, std::span<const std::byte> payload) {
  ctx.transport().map().at(root);
  if (ctx.rank() != root) return recv(ctx, root, tag);
  for (std::uint32_t r = 0; r < ctx.np(); ++r) {
    if (RankId(r) != root) send(ctx, RankId(r), tag, payload);
  }
  return Bytes(payload.begin(), payload.end());
}

std::vector<BenchRecord> bench_p2p(const SweepSpec& spec) {
  spec.validate();
  std::vector<BenchRecord> records;
  WorkerConfig base{"p2p", "direct", spec.sizes, spec.reps, spec.seed, {}};
  for (TransportMode t : spec.transports) {
    for (std::uint32_t nodes : {1u, 2u}) {
      const RankResults res = run_worker_job(spec, base, 2, nodes, t);
      for (std::size_t e = 0; e < spec.sizes.size(); ++e) {
        const auto& sender = res.ranks[0]["entries"][e];
        const auto& receiver = res.ranks[1]["entries"][e];
        if (sender["crcs"] != receiver["crcs"]) {
          throw Error(ErrorCode::ChecksumMismatch, "p2p receiver saw different bytes than were sent");
        }
        auto rec = make_record(Benchmark::P2p, t, "direct", 2, nodes, spec.sizes[e],
                               sender["times"].get<std::vector<double>>());
        rec.bandwidth_bytes_per_s = rec.median_s > 0 ? static_cast<double>(rec.msg_bytes) / rec.median_s : 0;
        rec.remote_copies = copies_per_rep(res, e, spec.reps);
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

std::vector<BenchRecord> bench_bcast(const SweepSpec& spec) {
  spec.validate();
  std::vector<BenchRecord> records;
  for (BcastScheme scheme : spec.schemes) {
    for (TransportMode t : spec.transports) {
      // central needs the shared directory; the naive fan-out exists to
      // show the LocalFs bottleneck
      if (scheme == BcastScheme::Central && t != TransportMode::SharedFs) continue;
      if (scheme == BcastScheme::NaiveLocalFs && t != TransportMode::LocalFs) continue;
      for (std::uint32_t np : spec.nps) {
        for (std::uint32_t nodes : node_counts(spec, np)) {
          WorkerConfig base{"bcast", to_string(scheme), spec.sizes, spec.reps, spec.seed, {}};
          const RankResults res = run_worker_job(spec, base, np, nodes, t);
          for (std::size_t e = 0; e < spec.sizes.size(); ++e) {
            const auto& root = res.ranks[0]["entries"][e];
            auto rec = make_record(Benchmark::Bcast, t, to_string(scheme), np, nodes, spec.sizes[e],
                                   root["times"].get<std::vector<double>>());
            rec.raw_times_s = root["raw"].get<std::vector<double>>();
            rec.raw_median_s = median(rec.raw_times_s);
            rec.remote_copies = copies_per_rep(res, e, spec.reps);
            records.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return records;
}

std::vector<BenchRecord> bench_agg(const SweepSpec& spec) {
  spec.validate();
  std::vector<BenchRecord> records;
  for (TransportMode t : spec.transports) {
    for (std::uint32_t np : spec.nps) {
      for (std::uint32_t nodes : node_counts(spec, np)) {
        WorkerConfig base{"agg", "binomial", spec.sizes, spec.reps, spec.seed, {}};
        const RankResults res = run_worker_job(spec, base, np, nodes, t);
        for (std::size_t e = 0; e < spec.sizes.size(); ++e) {
          for (std::uint32_t rep = 0; rep < spec.reps; ++rep) {
            std::uint64_t sent = 0;
            for (const auto& rank : res.ranks) sent += rank["entries"][e]["messages"][rep].get<std::uint64_t>();
            if (sent != np - 1) {
              throw Error(ErrorCode::ShapeMismatch, "agg sent " + std::to_string(sent) + " messages for np=" +
                                                        std::to_string(np));
            }
          }
          auto rec = make_record(Benchmark::Agg, t, "binomial", np, nodes, spec.sizes[e],
                                 res.ranks[0]["entries"][e]["times"].get<std::vector<double>>());
          rec.bandwidth_bytes_per_s = rec.median_s > 0 ? static_cast<double>(rec.msg_bytes) / rec.median_s : 0;
          rec.remote_copies = copies_per_rep(res, e, spec.reps);
          records.push_back(std::move(rec));
        }
      }
    }
  }
  return records;
}

void write_csv(std::vector<BenchRecord> records, std::ostream& out) {
  if (records.empty()) throw Error(ErrorCode::InvalidArgument, "no benchmark records to write");
  std::stable_sort(records.begin(), records.end(), [](const BenchRecord& a, const BenchRecord& b) {
    return std::tuple(to_string(a.benchmark), a.np, a.msg_bytes, to_string(a.transport), a.scheme, a.nodes) <
           std::tuple(to_string(b.benchmark), b.np, b.msg_bytes, to_string(b.transport), b.scheme, b.nodes);
  });
  out << "benchmark,transport,scheme,np,nodes,msg_bytes,repetitions,median_s,bandwidth_Bps,remote_copies\n";
  for (const auto& r : records) {
    out << to_string(r.benchmark) << ',' << to_string(r.transport) << ',' << r.scheme << ',' << r.np << ','
        << r.nodes << ',' << r.msg_bytes << ',' << r.repetitions << ',' << fmt_double(r.median_s) << ','
        << fmt_double(r.bandwidth_bytes_per_s) << ',' << r.remote_copies << '\n';
  }
}

void write_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_csv(records, out);
    if (!out.flush()) throw Error(ErrorCode::IoError, "short write to " + path.string());
  }

  auto extras_path = path;
  extras_path += ".extras.csv";
  std::ofstream extras(extras_path, std::ios::trunc);
  if (!extras) throw Error(ErrorCode::IoError, "cannot write " + extras_path.string());
  extras << "benchmark,transport,scheme,np,nodes,msg_bytes,raw_median_s,times_s,raw_times_s\n";
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt_double(v[i]);
    return s;
  };
  for (const auto& r : records) {
    extras << to_string(r.benchmark) << ',' << to_string(r.transport) << ',' << r.scheme << ',' << r.np << ','
           << r.nodes << ',' << r.msg_bytes << ',' << fmt_double(r.raw_median_s) << ',' << join(r.times_s) << ','
           << join(r.raw_times_s) << '\n';
  }
}

void save_worker_config(const WorkerConfig& cfg, const std::filesystem::path& file) {
  const json j = {{"benchmark", cfg.benchmark}, {"scheme", cfg.scheme},           {"sizes", cfg.sizes},
                  {"reps", cfg.reps},           {"seed", cfg.seed},               {"results_dir", cfg.results_dir.string()}};
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  out << j.dump(2);
}

WorkerConfig load_worker_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + file.string());
  const json j = json::parse(in);
  WorkerConfig cfg;
  cfg.benchmark = j.at("benchmark").get<std::string>();
  cfg.scheme = j.at("scheme").get<std::string>();
  cfg.sizes = j.at("sizes").get<std::vector<std::uint64_t>>();
  cfg.reps = j.at("reps").get<std::uint32_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.results_dir = j.at("results_dir").get<std::string>();
  return cfg;
}

}  // namespace fcomm::bench
