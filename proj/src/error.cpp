#include "fcomm/error.hpp"

#include "fcomm/types.hpp"

namespace fcomm {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::GapInRanks: return "GapInRanks";
    case ErrorCode::DuplicateRank: return "DuplicateRank";
    case ErrorCode::RankOutOfRange: return "RankOutOfRange";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::StaleMessage: return "StaleMessage";
    case ErrorCode::CopyFailed: return "CopyFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::SymlinkUnsupported: return "SymlinkUnsupported";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SpawnFailed: return "SpawnFailed";
    case ErrorCode::TimeoutKilled: return "TimeoutKilled";
  }
  return "Unknown";
}

std::string to_string(TransportMode mode) {
  return mode == TransportMode::SharedFs ? "SharedFs" : "LocalFs";
}

TransportMode parse_transport_mode(const std::string& text) {
  if (text == "SharedFs" || text == "shared" || text == "sharedfs" || text == "cfs") return TransportMode::SharedFs;
  if (text == "LocalFs" || text == "local" || text == "localfs" || text == "lfs") return TransportMode::LocalFs;
  throw Error(ErrorCode::InvalidArgument, "unknown transport '" + text + "'");
}

}  // namespace fcomm
