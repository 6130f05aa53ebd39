#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbench/digest.hpp"
#include "pbench/manifest.hpp"

namespace pbench {

class MerkleError : public Error {
 public:
  using Error::Error;
};

/// SHA-256(0x00 || id || 0x1F || label || 0x1F || h_raw || 0x1F || h_feat), digests as raw bytes.
Digest leaf_digest(const SampleRecord& r);
/// SHA-256(0x01 || left || right).
Digest node_digest(const Digest& left, const Digest& right);
/// Root of the empty tree: SHA-256 of the empty string.
Digest empty_root();

/// RFC 6962 style tree: n > 1 leaves split at the largest power of two below n.
class MerkleTree {
 public:
  MerkleTree() = default;
  explicit MerkleTree(std::vector<Digest> leaves);

  const Digest& root() const noexcept { return root_; }
  std::size_t size() const noexcept { return leaves_.size(); }
  const std::vector<Digest>& leaves() const noexcept { return leaves_; }

  struct Node {
    Digest digest{};
    std::size_t lo = 0, hi = 0;
    std::size_t left = 0, right = 0;  // child node indices, unused for leaves
  };
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t root_index() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }

 private:
  std::size_t build(std::size_t lo, std::size_t hi);

  std::vector<Digest> leaves_;
  std::vector<Node> nodes_;
  Digest root_ = empty_root();
};

/// Leaves follow the id order of `records`, which must already be sorted bytewise.
MerkleTree build_tree(std::span<const SampleRecord> records);

enum class Side { left, right };

struct ProofStep {
  Side side = Side::left;  // side of the sibling relative to the running hash
  Digest sibling{};
  bool operator==(const ProofStep&) const = default;
};

struct MerkleProof {
  std::size_t index = 0;
  std::vector<ProofStep> path;
  Digest root{};
  bool operator==(const MerkleProof&) const = default;
};

MerkleProof prove_inclusion(const MerkleTree& tree, std::size_t index);
bool verify_inclusion(const SampleRecord& record, const MerkleProof& proof);
/// Folds the audit path over an already computed leaf digest.
Digest fold_proof(const Digest& leaf, const MerkleProof& proof);

/// `index TAB side:hex TAB side:hex ...` with side L or R. The root is not part of the file.
std::string serialize_proof(const MerkleProof& proof);
MerkleProof parse_proof(std::string_view text, const Digest& root);

/// Append-only root log: one `timestamp TAB stage TAB root-hex` line per commitment.
struct RootEntry {
  std::string timestamp;
  Stage stage = Stage::features;
  Digest root{};
};

class RootLogMissing : public MerkleError {
 public:
  using MerkleError::MerkleError;
};

class NoCommittedRoot : public MerkleError {
 public:
  using MerkleError::MerkleError;
};

std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());
RootEntry record_root(const std::filesystem::path& log, Stage stage, const Digest& root,
                      std::string timestamp = utc_timestamp());
std::vector<RootEntry> read_root_log(const std::filesystem::path& log);
/// Latest entry for `stage`. Throws RootLogMissing or NoCommittedRoot.
Digest latest_root(const std::filesystem::path& log, Stage stage);
/// Compares `expected` with the latest committed root for `stage`.
bool check_root(const Digest& expected, const std::filesystem::path& log, Stage stage = Stage::features);

/// The terminal line printed when a committed root does not match.
inline constexpr std::string_view kMerkleAbortLine = "✗ MERKLE ROOT MISMATCH --- ABORT.";

}  // namespace pbench
