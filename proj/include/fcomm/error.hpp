#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcomm {

// Every failure the toolkit reports carries one of these codes.
enum class ErrorCode {
  // framing
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  Truncated,
  // host map
  ParseError,
  GapInRanks,
  DuplicateRank,
  RankOutOfRange,
  UnknownNode,
  // transport / p2p
  IoError,
  StaleMessage,
  CopyFailed,
  Timeout,
  HeaderMismatch,
  SymlinkUnsupported,
  // collectives
  ShapeMismatch,
  // launcher
  InvalidArgument,
  SpawnFailed,
  TimeoutKilled,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fcomm
