#include "pbench/merkle.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <ctime>
#include <fstream>

namespace pbench {

namespace {
constexpr std::uint8_t kLeafPrefix = 0x00;
constexpr std::uint8_t kNodePrefix = 0x01;
constexpr std::uint8_t kUnitSep = 0x1f;

std::size_t split_point(std::size_t n) {
  std::size_t k = 1;
  while (k * 2 < n) k *= 2;
  return k;
}
}  // namespace

Digest leaf_digest(const SampleRecord& r) {
  Sha256 h;
  h.update(kLeafPrefix).update(r.id).update(kUnitSep).update(r.label).update(kUnitSep);
  h.update(r.h_raw).update(kUnitSep).update(r.h_feat);
  return h.finish();
}

Digest node_digest(const Digest& left, const Digest& right) {
  return Sha256().update(kNodePrefix).update(left).update(right).finish();
}

Digest empty_root() { return sha256(std::string_view{}); }

MerkleTree::MerkleTree(std::vector<Digest> leaves) : leaves_(std::move(leaves)) {
  if (leaves_.empty()) return;
  nodes_.reserve(2 * leaves_.size() - 1);
  root_ = nodes_[build(0, leaves_.size())].digest;
}

std::size_t MerkleTree::build(std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) {
    nodes_.push_back({leaves_[lo], lo, hi, 0, 0});
    return nodes_.size() - 1;
  }
  const std::size_t mid = lo + split_point(hi - lo);
  const std::size_t l = build(lo, mid);
  const std::size_t r = build(mid, hi);
  nodes_.push_back({node_digest(nodes_[l].digest, nodes_[r].digest), lo, hi, l, r});
  return nodes_.size() - 1;
}

MerkleTree build_tree(std::span<const SampleRecord> records) {
  std::vector<Digest> leaves;
  leaves.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && !(records[i - 1].id < records[i].id))
      throw MerkleError("records must be sorted by id; violated at '" + records[i].id + "'");
    leaves.push_back(leaf_digest(records[i]));
  }
  return MerkleTree(std::move(leaves));
}

MerkleProof prove_inclusion(const MerkleTree& tree, std::size_t index) {
  if (index >= tree.size())
    throw MerkleError("leaf index " + std::to_string(index) + " out of range for " + std::to_string(tree.size()) +
                      " leaves");
  const auto& nodes = tree.nodes();
  MerkleProof proof{index, {}, tree.root()};
  std::size_t cur = tree.root_index();
  while (nodes[cur].hi - nodes[cur].lo > 1) {
    const auto& n = nodes[cur];
    if (index < nodes[n.left].hi) {
      proof.path.push_back({Side::right, nodes[n.right].digest});
      cur = n.left;
    } else {
      proof.path.push_back({Side::left, nodes[n.left].digest});
      cur = n.right;
    }
  }
  std::reverse(proof.path.begin(), proof.path.end());
  return proof;
}

Digest fold_proof(const Digest& leaf, const MerkleProof& proof) {
  Digest h = leaf;
  for (const auto& step : proof.path)
    h = step.side == Side::left ? node_digest(step.sibling, h) : node_digest(h, step.sibling);
  return h;
}

bool verify_inclusion(const SampleRecord& record, const MerkleProof& proof) {
  return fold_proof(leaf_digest(record), proof) == proof.root;
}

std::string serialize_proof(const MerkleProof& proof) {
  std::string out = std::to_string(proof.index);
  for (const auto& step : proof.path) {
    out += '\t';
    out += step.side == Side::left ? "L:" : "R:";
    out += to_hex(step.sibling);
  }
  out += '\n';
  return out;
}

MerkleProof parse_proof(std::string_view text, const Digest& root) {
  std::string line(text);
  if (!line.empty() && line.back() == '\n') line.pop_back();
  std::vector<std::string> fields;
  boost::split(fields, line, boost::is_any_of("\t"));
  MerkleProof proof;
  proof.root = root;
  try {
    std::size_t pos = 0;
    proof.index = std::stoull(fields[0], &pos);
    if (pos != fields[0].size()) throw MerkleError("bad index");
  } catch (const std::exception&) {
    throw MerkleError("malformed proof: bad leaf index '" + fields[0] + "'");
  }
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto& f = fields[i];
    if (f.size() != 66 || f[1] != ':' || (f[0] != 'L' && f[0] != 'R') || !is_digest_hex(std::string_view(f).substr(2)))
      throw MerkleError("malformed proof element " + std::to_string(i) + ": '" + f + "'");
    proof.path.push_back({f[0] == 'L' ? Side::left : Side::right, digest_from_hex(std::string_view(f).substr(2))});
  }
  return proof;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RootEntry record_root(const std::filesystem::path& log, Stage stage, const Digest& root, std::string timestamp) {
  if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
  std::ofstream out(log, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to root log " + log.string());
  out << timestamp << '\t' << stage_name(stage) << '\t' << to_hex(root) << '\n';
  out.flush();
  if (!out) throw IoError("append to root log failed: " + log.string());
  return {std::move(timestamp), stage, root};
}

std::vector<RootEntry> read_root_log(const std::filesystem::path& log) {
  if (!std::filesystem::exists(log)) throw RootLogMissing("root log missing: " + log.string());
  const std::string text = read_text_file(log);
  std::vector<std::string> lines;
  boost::split(lines, text, boost::is_any_of("\n"));
  std::vector<RootEntry> entries;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> f;
    boost::split(f, lines[i], boost::is_any_of("\t"));
    if (f.size() != 3 || !is_digest_hex(f[2]))
      throw MerkleError("root log line " + std::to_string(i + 1) + " is malformed");
    entries.push_back({f[0], parse_stage(f[1]), digest_from_hex(f[2])});
  }
  return entries;
}

Digest latest_root(const std::filesystem::path& log, Stage stage) {
  const auto entries = read_root_log(log);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->stage == stage) return it->root;
  throw NoCommittedRoot("no committed root for stage " + std::string(stage_name(stage)) + " in " + log.string());
}

bool check_root(const Digest& expected, const std::filesystem::path& log, Stage stage) {
  return latest_root(log, stage) == expected;
}

}  // namespace pbench
