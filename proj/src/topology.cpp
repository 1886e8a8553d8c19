#include "fcomm/topology.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>

#include "fcomm/error.hpp"

namespace fcomm {

namespace {

bool is_token(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

HostRankMap::HostRankMap(std::vector<RankPlacement> entries) : entries_(std::move(entries)) {
  for (std::size_t r = 0; r < entries_.size(); ++r) {
    const auto& e = entries_[r];
    if (!is_token(e.node.value)) {
      throw Error(ErrorCode::ParseError, "rank " + std::to_string(r) + ": node must be a non-empty token");
    }
    if (!e.msg_dir.is_absolute()) {
      throw Error(ErrorCode::ParseError, "rank " + std::to_string(r) + ": msg_dir '" + e.msg_dir.string() +
                                             "' is not absolute");
    }
  }
}

const RankPlacement& HostRankMap::at(RankId r) const {
  if (r.value >= entries_.size()) {
    throw Error(ErrorCode::RankOutOfRange,
                "rank " + std::to_string(r.value) + " not in [0, " + std::to_string(entries_.size()) + ")");
  }
  return entries_[r.value];
}

std::vector<NodeId> HostRankMap::nodes() const {
  std::vector<NodeId> out;
  std::unordered_set<NodeId> seen;
  for (const auto& e : entries_) {
    if (seen.insert(e.node).second) out.push_back(e.node);
  }
  return out;
}

HostRankMap parse_map(std::istream& in) {
  std::vector<std::optional<RankPlacement>> slots;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string rank_text, node, dir, extra;
    if (!(fields >> rank_text)) continue;  // blank or comment-only
    if (!(fields >> node >> dir) || (fields >> extra)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected '<rank> <node> <msg_dir>'");
    }
    std::uint64_t rank = 0;
    try {
      std::size_t used = 0;
      rank = std::stoull(rank_text, &used);
      if (used != rank_text.size() || rank_text.front() == '-') throw std::invalid_argument(rank_text);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad rank '" + rank_text + "'");
    }
    if (rank > 0xFFFFFFFEu) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": rank too large");
    }
    if (rank >= slots.size()) slots.resize(rank + 1);
    if (slots[rank]) {
      throw Error(ErrorCode::DuplicateRank, "rank " + std::to_string(rank) + " listed twice");
    }
    slots[rank] = RankPlacement{NodeId(node), std::filesystem::path(dir)};
  }
  if (slots.empty()) throw Error(ErrorCode::ParseError, "host map has no ranks");

  std::vector<RankPlacement> entries;
  entries.reserve(slots.size());
  for (std::size_t r = 0; r < slots.size(); ++r) {
    if (!slots[r]) throw Error(ErrorCode::GapInRanks, "rank " + std::to_string(r) + " missing");
    entries.push_back(std::move(*slots[r]));
  }
  return HostRankMap(std::move(entries));
}

HostRankMap load_map(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open host map " + file.string());
  return parse_map(in);
}

void write_map(const HostRankMap& map, std::ostream& out) {
  for (std::uint32_t r = 0; r < map.np(); ++r) {
    const auto& e = map.at(RankId(r));
    out << r << ' ' << e.node.value << ' ' << e.msg_dir.string() << '\n';
  }
}

void write_map(const HostRankMap& map, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write host map " + file.string());
  write_map(map, out);
  if (!out.flush()) throw Error(ErrorCode::IoError, "short write to " + file.string());
}

bool colocated(const HostRankMap& map, RankId a, RankId b) {
  return map.node_of(a) == map.node_of(b);
}

RankId leader_of(const HostRankMap& map, const NodeId& node) {
  for (std::uint32_t r = 0; r < map.np(); ++r) {
    if (map.node_of(RankId(r)) == node) return RankId(r);
  }
  throw Error(ErrorCode::UnknownNode, "no rank runs on node '" + node.value + "'");
}

std::vector<RankId> node_peers(const HostRankMap& map, RankId r) {
  const NodeId& node = map.node_of(r);
  std::vector<RankId> peers;
  for (std::uint32_t q = 0; q < map.np(); ++q) {
    if (map.node_of(RankId(q)) == node) peers.emplace_back(q);
  }
  return peers;
}

}  // namespace fcomm
