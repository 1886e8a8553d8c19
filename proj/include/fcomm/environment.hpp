#pragma once

// Environment contract between the launcher and rank processes.

namespace fcomm::env {

inline constexpr const char* kRank = "FCOMM_RANK";
inline constexpr const char* kNp = "FCOMM_NP";
inline constexpr const char* kMapFile = "FCOMM_MAP_FILE";
inline constexpr const char* kMsgDir = "FCOMM_MSG_DIR";  // this rank's inbox

inline constexpr const char* kTransport = "FCOMM_TRANSPORT";
inline constexpr const char* kCopier = "FCOMM_COPIER";
inline constexpr const char* kCopierLatencyMs = "FCOMM_COPIER_LATENCY_MS";
inline constexpr const char* kCopierBandwidth = "FCOMM_COPIER_BANDWIDTH";
inline constexpr const char* kCopierStallMs = "FCOMM_COPIER_STALL_MS";
inline constexpr const char* kScpConnectTimeout = "FCOMM_SCP_CONNECT_TIMEOUT";
inline constexpr const char* kPollInitialUs = "FCOMM_POLL_INITIAL_US";
inline constexpr const char* kPollMaxUs = "FCOMM_POLL_MAX_US";
inline constexpr const char* kPollTimeoutMs = "FCOMM_POLL_TIMEOUT_MS";
inline constexpr const char* kKeepFiles = "FCOMM_KEEP_FILES";

}  // namespace fcomm::env
