#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fcomm::bench {

inline constexpr const char* kBenchConfigEnv = "FCOMM_BENCH_CONFIG";

struct WorkerConfig {
  std::string benchmark;  // p2p | bcast | agg
  std::string scheme;
  std::vector<std::uint64_t> sizes;
  std::uint32_t reps = 4;
  std::uint64_t seed = 1;
  std::filesystem::path results_dir;
};

void save_worker_config(const WorkerConfig& cfg, const std::filesystem::path& file);
WorkerConfig load_worker_config(const std::filesystem::path& file);

}  // namespace fcomm::bench
