#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pbench/merkle.hpp"

using namespace pbench;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pbench-merkle-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<SampleRecord> make_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  static const char* labels[] = {"Car", "Tram", "Truck", "Bus", "Motorcycle", "Bicycle"};
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i);
    id.insert(0, 6 - id.size(), '0');
    SampleRecord r{"clip-" + id, labels[rng() % 6], {}, {}};
    for (auto& b : r.h_raw) b = static_cast<std::uint8_t>(rng());
    for (auto& b : r.h_feat) b = static_cast<std::uint8_t>(rng());
    out.push_back(r);
  }
  return out;
}

std::vector<SampleRecord> golden_records() {
  return {{"clip-00001", "Car", sha256(std::string_view("raw1")), sha256(std::string_view("feat1"))},
          {"clip-00002", "Truck", sha256(std::string_view("raw2")), sha256(std::string_view("feat2"))},
          {"clip-00003", "Bus", sha256(std::string_view("raw3")), sha256(std::string_view("feat3"))}};
}

}  // namespace

TEST_CASE("hash_file") {
  TempDir dir;
  write_file_atomic(dir.path / "empty", std::string_view(""));
  CHECK(to_hex(hash_file(dir.path / "empty")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string body(100000, 'q');
  write_file_atomic(dir.path / "a", std::string_view(body));
  write_file_atomic(dir.path / "b", std::string_view(body));
  CHECK(hash_file(dir.path / "a") == hash_file(dir.path / "b"));
  CHECK(hash_file(dir.path / "a") == sha256(std::string_view(body)));
  std::string flipped = body;
  flipped[54321] ^= 1;
  write_file_atomic(dir.path / "c", std::string_view(flipped));
  CHECK(hash_file(dir.path / "c") != hash_file(dir.path / "a"));
  CHECK_THROWS_AS(hash_file(dir.path / "missing"), IoError);
}

TEST_CASE("leaf and tree digests match an independent computation") {
  const auto recs = golden_records();
  CHECK(to_hex(leaf_digest(recs[0])) == "387de25cd9db91d8d3c308658a80ff5366f7cb98b08c1a28ed7584b72fe11cb5");
  CHECK(to_hex(build_tree(recs).root()) == "cfee763b3a9d2a7eadde9a4d09f163262181a05aad5a62c4cf8d1fae7c912731");
}

TEST_CASE("small trees") {
  const auto recs = golden_records();
  CHECK(build_tree(std::span(recs).first(1)).root() == leaf_digest(recs[0]));
  CHECK(build_tree(std::span(recs).first(2)).root() == node_digest(leaf_digest(recs[0]), leaf_digest(recs[1])));
  CHECK(build_tree({}).root() == sha256(std::string_view("")));
  CHECK(empty_root() == sha256(std::string_view("")));

  auto unsorted = recs;
  std::swap(unsorted[0], unsorted[2]);
  CHECK_THROWS_AS(build_tree(unsorted), MerkleError);
}

TEST_CASE("leaf and node preimages are domain separated") {
  const auto recs = golden_records();
  const auto l0 = leaf_digest(recs[0]);
  const auto l1 = leaf_digest(recs[1]);
  Bytes node_pre = {0x01};
  node_pre.insert(node_pre.end(), l0.begin(), l0.end());
  node_pre.insert(node_pre.end(), l1.begin(), l1.end());
  CHECK(sha256(node_pre) == node_digest(l0, l1));
  Bytes leaf_pre = {0x00};
  for (char c : recs[0].id) leaf_pre.push_back(static_cast<std::uint8_t>(c));
  leaf_pre.push_back(0x1F);
  for (char c : recs[0].label) leaf_pre.push_back(static_cast<std::uint8_t>(c));
  leaf_pre.push_back(0x1F);
  leaf_pre.insert(leaf_pre.end(), recs[0].h_raw.begin(), recs[0].h_raw.end());
  leaf_pre.push_back(0x1F);
  leaf_pre.insert(leaf_pre.end(), recs[0].h_feat.begin(), recs[0].h_feat.end());
  CHECK(sha256(leaf_pre) == l0);
  CHECK(leaf_pre[0] != node_pre[0]);
}

TEST_CASE("single label flips change the root") {
  const auto recs = make_records(1000, 1);
  const auto root = build_tree(recs).root();
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto mutated = recs;
    auto& r = mutated[rng() % mutated.size()];
    r.label = r.label == "Car" ? "Truck" : "Car";
    CHECK(build_tree(mutated).root() != root);
  }
}

TEST_CASE("single field mutations change the root") {
  const auto recs = make_records(300, 3);
  const auto root = build_tree(recs).root();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto mutated = recs;
    auto& r = mutated[rng() % mutated.size()];
    switch (trial % 4) {
      case 0: r.id += "x"; break;
      case 1: r.label += "s"; break;
      case 2: r.h_raw[rng() % 32] ^= 1; break;
      case 3: r.h_feat[rng() % 32] ^= 1; break;
    }
    std::sort(mutated.begin(), mutated.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    CHECK(build_tree(mutated).root() != root);
  }
}

TEST_CASE("every proof verifies for N up to 64 and any tampering fails") {
  for (std::size_t n = 1; n <= 64; ++n) {
    const auto recs = make_records(n, n);
    const auto tree = build_tree(recs);
    for (std::size_t i = 0; i < n; ++i) {
      const auto proof = prove_inclusion(tree, i);
      CHECK(proof.root == tree.root());
      CHECK(verify_inclusion(recs[i], proof));
      if (n == 1) CHECK(proof.path.empty());
      for (std::size_t k = 0; k < proof.path.size(); ++k) {
        auto bad = proof;
        bad.path[k].sibling[k % 32] ^= 0x40;
        CHECK_FALSE(verify_inclusion(recs[i], bad));
        auto swapped = proof;
        swapped.path[k].side = swapped.path[k].side == Side::left ? Side::right : Side::left;
        CHECK_FALSE(verify_inclusion(recs[i], swapped));
      }
      if (n > 1) CHECK_FALSE(verify_inclusion(recs[(i + 1) % n], proof));
    }
  }
}

namespace {

// Depth of leaf i under the largest-power-of-two split.
std::size_t expected_depth(std::size_t n, std::size_t i) {
  if (n == 1) return 0;
  std::size_t k = 1;
  while (k * 2 < n) k *= 2;
  return 1 + (i < k ? expected_depth(k, i) : expected_depth(n - k, i - k));
}

}  // namespace

TEST_CASE("proof lengths follow the split rule and the log bounds") {
  std::mt19937_64 rng(6);
  for (std::size_t n = 1; n <= 4096; ++n) {
    std::vector<Digest> leaves(n);
    for (std::size_t i = 0; i < n; ++i) leaves[i] = sha256(std::string_view(reinterpret_cast<const char*>(&i), sizeof i));
    const MerkleTree tree(leaves);
    const auto lo = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n))));
    const auto hi = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n))));
    std::vector<std::size_t> indices;
    if (n <= 256) {
      for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
    } else {
      indices = {0, n - 1, n / 2};
      for (int k = 0; k < 8; ++k) indices.push_back(rng() % n);
    }
    std::size_t perfect = 1;
    while (perfect * 2 <= n) perfect *= 2;
    for (auto i : indices) {
      const auto len = prove_inclusion(tree, i).path.size();
      CHECK(len == expected_depth(n, i));
      CHECK(len <= hi);
      // Leaves after the leading perfect subtree sit closer to the root.
      if (i < perfect) CHECK(len >= lo);
    }
  }
}

TEST_CASE("proof file round trip and errors") {
  const auto recs = make_records(37, 9);
  const auto tree = build_tree(recs);
  const auto proof = prove_inclusion(tree, 20);
  const auto text = serialize_proof(proof);
  CHECK(text.rfind("20\t", 0) == 0);
  CHECK(parse_proof(text, tree.root()) == proof);
  CHECK_THROWS_AS(prove_inclusion(tree, 37), MerkleError);
  CHECK_THROWS_AS(parse_proof("x\tL:00", tree.root()), MerkleError);
  CHECK_THROWS_AS(parse_proof("3\tQ:" + std::string(64, 'a'), tree.root()), MerkleError);
  CHECK_THROWS_AS(parse_proof("3\tL:" + std::string(63, 'a'), tree.root()), MerkleError);
}

TEST_CASE("root log") {
  TempDir dir;
  const auto log = dir.path / "roots.log";
  const auto recs = make_records(20, 1);
  const auto root = build_tree(recs).root();

  CHECK_THROWS_AS(check_root(root, log), RootLogMissing);
  write_file_atomic(log, std::string_view(""));
  CHECK_THROWS_AS(check_root(root, log), NoCommittedRoot);

  record_root(log, Stage::features, root, "2026-01-01T00:00:00Z");
  CHECK(check_root(root, log));
  const auto text = read_text_file(log);
  CHECK(text == "2026-01-01T00:00:00Z\tfeatures\t" + to_hex(root) + "\n");

  auto poisoned = recs;
  poisoned[4].label = poisoned[4].label == "Car" ? "Truck" : "Car";
  CHECK_FALSE(check_root(build_tree(poisoned).root(), log));

  // Appending keeps history and the latest entry wins.
  const auto newer = build_tree(poisoned).root();
  record_root(log, Stage::features, newer);
  CHECK(read_root_log(log).size() == 2);
  CHECK(latest_root(log, Stage::features) == newer);
  CHECK(read_text_file(log).rfind(text, 0) == 0);
  CHECK_THROWS_AS(latest_root(log, Stage::model), NoCommittedRoot);

  CHECK(kMerkleAbortLine == "\xE2\x9C\x97 MERKLE ROOT MISMATCH --- ABORT.");
}
