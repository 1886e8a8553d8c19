#pragma once

// Benchmark drivers: p2p ping-ack, broadcast and aggregation sweeps run as
// real multi-process jobs through the launcher, with CSV output.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fcomm/p2p.hpp"

namespace fcomm::bench {

enum class Benchmark { P2p, Bcast, Agg };

enum class BcastScheme {
  Central,       // symlink multicast in the shared directory
  NodeAware,     // two-level multicast
  NaiveLocalFs,  // root sends to every member itself; reference only
};

std::string to_string(Benchmark b);
std::string to_string(BcastScheme s);
BcastScheme parse_scheme(const std::string& text);

struct BenchRecord {
  Benchmark benchmark = Benchmark::P2p;
  TransportMode transport = TransportMode::LocalFs;
  std::string scheme;
  std::uint32_t np = 0;
  std::uint32_t nodes = 0;
  std::uint64_t msg_bytes = 0;
  std::uint32_t repetitions = 0;
  std::vector<double> times_s;
  double median_s = 0;
  double bandwidth_bytes_per_s = 0;  // p2p and agg; zero for bcast
  std::uint64_t remote_copies = 0;   // per repetition, summed over ranks

  // bcast only: times before subtracting the calibrated ack-gather cost
  std::vector<double> raw_times_s;
  double raw_median_s = 0;
};

/// Middle element for odd counts, mean of the two middle order statistics
/// for even counts. Throws InvalidArgument on an empty input.
double median(std::span<const double> values);

struct SweepSpec {
  std::vector<std::uint64_t> sizes;   // strictly increasing; bytes
  std::vector<std::uint32_t> nps;
  std::vector<std::uint32_t> nodes;   // empty: ceil(np / ranks_per_node)
  std::uint32_t ranks_per_node = 4;
  std::uint32_t reps = 4;
  std::vector<TransportMode> transports = {TransportMode::SharedFs, TransportMode::LocalFs};
  std::vector<BcastScheme> schemes = {BcastScheme::Central, BcastScheme::NodeAware, BcastScheme::NaiveLocalFs};
  std::chrono::milliseconds copier_latency{0};
  std::uint64_t seed = 1;

  std::vector<std::string> worker_command;  // empty: this executable + "worker"
  std::filesystem::path workdir_root;       // empty: the system temp directory
  std::chrono::milliseconds job_timeout{300000};
  std::chrono::microseconds poll_initial{50};
  std::chrono::microseconds poll_max{1000};

  /// Throws InvalidArgument.
  void validate() const;
};

/// Two ranks, same node and cross node, every transport in the sweep. One
/// way time per repetition is half of a data-message-plus-16-byte-ack round
/// trip.
std::vector<BenchRecord> bench_p2p(const SweepSpec& spec);

/// Broadcast of each size (default 32 bytes) for every np, node count and
/// scheme. Completion is rank 0 collecting checksum acks from every rank;
/// the calibrated cost of that ack gather is subtracted.
std::vector<BenchRecord> bench_bcast(const SweepSpec& spec);

/// agg of a block-distributed array of `size` bytes for every np and transport.
std::vector<BenchRecord> bench_agg(const SweepSpec& spec);

/// Header `benchmark,transport,scheme,np,nodes,msg_bytes,repetitions,median_s,bandwidth_Bps,remote_copies`
/// then one row per record, sorted by benchmark, np and msg_bytes.
void write_csv(std::vector<BenchRecord> records, std::ostream& out);

/// Writes the CSV, plus `<path>.extras.csv` holding every raw timing.
void write_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path);

/// Deterministic pseudo-random payload.
Bytes make_payload(std::uint64_t seed, std::uint64_t stream, std::size_t size);

/// Reference broadcast where the root sends every other rank its own copy.
Bytes bcast_naive_localfs(CommContext& ctx, RankId root, Tag tag, std::span<const std::byte> payload = {});

/// Entry point of a benchmark rank process (reads FCOMM_BENCH_CONFIG).
int worker_main();

}  // namespace fcomm::bench
