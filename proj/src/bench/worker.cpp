// Rank side of the benchmarks. Each rank process reads the job description
// from FCOMM_BENCH_CONFIG, runs the timed loop and writes rank<r>.json into
// the results directory for the orchestrator.

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fcomm/bench.hpp"
#include "fcomm/collectives.hpp"
#include "fcomm/error.hpp"
#include "worker_protocol.hpp"

namespace fcomm::bench {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Bytes crc_bytes(std::uint32_t crc) {
  Bytes out(4);
  std::memcpy(out.data(), &crc, 4);
  return out;
}

std::uint32_t crc_from(const Bytes& b) {
  if (b.size() != 4) throw Error(ErrorCode::ShapeMismatch, "ack is not a 4-byte checksum");
  std::uint32_t crc = 0;
  std::memcpy(&crc, b.data(), 4);
  return crc;
}

// Everyone reports to rank 0; rank 0 returns once all have.
void gather_ready(CommContext& ctx, Tag tag) {
  const std::byte one{1};
  if (ctx.rank().value == 0) {
    for (std::uint32_t r = 1; r < ctx.np(); ++r) recv(ctx, RankId(r), tag);
  } else {
    send(ctx, RankId(0), tag, {&one, 1});
  }
}

Tag phase_tag(std::size_t step, std::uint32_t phase) {
  return Tag(static_cast<std::uint32_t>(kCollectiveTagStride * (1 + step * 8 + phase)));
}

double global_value(std::uint64_t seed, std::uint64_t i) {
  return static_cast<double>(i) * 0.5 + static_cast<double>(seed % 1000);
}

void run_p2p(CommContext& ctx, const WorkerConfig& cfg, json& out) {
  if (ctx.np() != 2) throw Error(ErrorCode::InvalidArgument, "p2p benchmark needs exactly 2 ranks");
  const bool sender = ctx.rank().value == 0;
  const Bytes ack(16, std::byte{0});
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
    json entry = {{"size", cfg.sizes[si]}};
    std::vector<double> times;
    std::vector<std::uint64_t> copies, crcs;
    for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
      const std::size_t step = si * cfg.reps + rep;
      const Tag data_tag = phase_tag(step, 0);
      const Tag ack_tag = phase_tag(step, 1);
      const auto before = ctx.transport().counter().remote_copies;
      if (sender) {
        const Bytes payload = make_payload(cfg.seed, step, cfg.sizes[si]);
        crcs.push_back(crc32(payload));
        const auto t0 = Clock::now();
        send(ctx, RankId(1), data_tag, payload);
        recv(ctx, RankId(1), ack_tag);
        times.push_back(seconds_since(t0) / 2);
      } else {
        const Bytes got = recv(ctx, RankId(0), data_tag);
        send(ctx, RankId(0), ack_tag, ack);
        crcs.push_back(crc32(got));
      }
      copies.push_back(ctx.transport().counter().remote_copies - before);
    }
    entry["times"] = times;
    entry["copies"] = copies;
    entry["crcs"] = crcs;
    out["entries"].push_back(entry);
  }
}

Bytes run_bcast_once(CommContext& ctx, BcastScheme scheme, Tag tag, std::span<const std::byte> payload) {
  switch (scheme) {
    case BcastScheme::Central: return bcast_central(ctx, RankId(0), tag, payload);
    case BcastScheme::NodeAware: return bcast_node_aware(ctx, RankId(0), tag, payload);
    case BcastScheme::NaiveLocalFs: return bcast_naive_localfs(ctx, RankId(0), tag, payload);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown scheme");
}

void run_bcast(CommContext& ctx, const WorkerConfig& cfg, json& out) {
  const bool root = ctx.rank().value == 0;
  const BcastScheme scheme = parse_scheme(cfg.scheme);
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
    const Bytes payload = make_payload(cfg.seed, si, cfg.sizes[si]);
    const std::uint32_t expected = crc32(payload);
    json entry = {{"size", cfg.sizes[si]}};
    std::vector<double> calib, raw;
    std::vector<std::uint64_t> copies;
    bool ok = true;

    // Ack-gather cost on its own.
    for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
      const std::size_t step = si * cfg.reps + rep;
      gather_ready(ctx, phase_tag(step, 3));
      if (root) {
        const auto t0 = Clock::now();
        for (std::uint32_t r = 1; r < ctx.np(); ++r) crc_from(recv(ctx, RankId(r), phase_tag(step, 4)));
        calib.push_back(seconds_since(t0));
      } else {
        send(ctx, RankId(0), phase_tag(step, 4), crc_bytes(expected));
      }
    }

    for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
      const std::size_t step = si * cfg.reps + rep;
      gather_ready(ctx, phase_tag(step, 0));
      const auto before = ctx.transport().counter().remote_copies;
      if (root) {
        const auto t0 = Clock::now();
        run_bcast_once(ctx, scheme, phase_tag(step, 1), payload);
        copies.push_back(ctx.transport().counter().remote_copies - before);
        for (std::uint32_t r = 1; r < ctx.np(); ++r) {
          if (crc_from(recv(ctx, RankId(r), phase_tag(step, 2))) != expected) ok = false;
        }
        raw.push_back(seconds_since(t0));
      } else {
        const Bytes got = run_bcast_once(ctx, scheme, phase_tag(step, 1), {});
        copies.push_back(ctx.transport().counter().remote_copies - before);
        send(ctx, RankId(0), phase_tag(step, 2), crc_bytes(crc32(got)));
      }
    }

    entry["copies"] = copies;
    if (root) {
      const double ack_cost = median(calib);
      std::vector<double> corrected;
      for (double t : raw) corrected.push_back(std::max(0.0, t - ack_cost));
      entry["times"] = corrected;
      entry["raw"] = raw;
      entry["calibration"] = calib;
      if (!ok) {
        out["ok"] = false;
        out["error"] = "a rank acknowledged a payload with the wrong checksum";
      }
    }
    out["entries"].push_back(entry);
  }
}

void run_agg(CommContext& ctx, const WorkerConfig& cfg, json& out) {
  const std::uint32_t np = ctx.np();
  const std::uint32_t me = ctx.rank().value;
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
    const std::uint64_t global_len = cfg.sizes[si] / sizeof(double);
    DistVector v;
    v.global_len = global_len;
    v.np = np;
    v.rank = ctx.rank();
    const auto off = block_offset(global_len, np, me);
    v.local.resize(block_len(global_len, np, me));
    for (std::size_t i = 0; i < v.local.size(); ++i) v.local[i] = global_value(cfg.seed, off + i);

    std::uint32_t expected = 0;
    if (me == 0) {
      std::vector<double> global(global_len);
      for (std::uint64_t i = 0; i < global_len; ++i) global[i] = global_value(cfg.seed, i);
      expected = crc32(std::as_bytes(std::span(global)));
    }

    json entry = {{"size", cfg.sizes[si]}};
    std::vector<double> times;
    std::vector<std::uint64_t> copies, messages;
    for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
      const std::size_t step = si * cfg.reps + rep;
      gather_ready(ctx, phase_tag(step, 0));
      const auto copies_before = ctx.transport().counter().remote_copies;
      const auto sent_before = ctx.counters().messages_sent;
      const auto t0 = Clock::now();
      const auto result = agg(ctx, v, phase_tag(step, 1));
      const double t = seconds_since(t0);
      copies.push_back(ctx.transport().counter().remote_copies - copies_before);
      messages.push_back(ctx.counters().messages_sent - sent_before);
      if (me == 0) {
        times.push_back(t);
        if (crc32(std::as_bytes(std::span(result))) != expected || result.size() != global_len) {
          out["ok"] = false;
          out["error"] = "aggregated array checksum mismatch";
        }
      }
    }
    entry["times"] = times;
    entry["copies"] = copies;
    entry["messages"] = messages;
    out["entries"].push_back(entry);
  }
}

}  // namespace

int worker_main() {
  const char* config_path = std::getenv(kBenchConfigEnv);
  if (config_path == nullptr) {
    std::cerr << "fcomm worker: " << kBenchConfigEnv << " is not set\n";
    return 2;
  }
  json out = {{"ok", true}, {"error", ""}, {"entries", json::array()}};
  std::filesystem::path results;
  int rc = 0;
  try {
    const WorkerConfig cfg = load_worker_config(config_path);
    results = cfg.results_dir;
    CommContext ctx = CommContext::from_environment();
    out["rank"] = ctx.rank().value;
    if (cfg.benchmark == "p2p") {
      run_p2p(ctx, cfg, out);
    } else if (cfg.benchmark == "bcast") {
      run_bcast(ctx, cfg, out);
    } else if (cfg.benchmark == "agg") {
      run_agg(ctx, cfg, out);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown benchmark '" + cfg.benchmark + "'");
    }
  } catch (const std::exception& e) {
    out["ok"] = false;
    out["error"] = e.what();
    std::cerr << "fcomm worker: " << e.what() << '\n';
    rc = 1;
  }
  if (!results.empty()) {
    const char* rank = std::getenv("FCOMM_RANK");
    std::ofstream f(results / ("rank" + std::string(rank != nullptr ? rank : "x") + ".json"));
    f << out.dump();
  }
  return rc;
}

}  // namespace fcomm::bench
