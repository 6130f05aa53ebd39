#include "pbench/chain.hpp"

#include <map>
#include <optional>

#include "pbench/merkle.hpp"
#include "pbench/object_store.hpp"

namespace pbench {

namespace {

struct StageFiles {
  std::optional<std::string> text;
  std::optional<StageManifest> parsed;
};

}  // namespace

std::string_view failure_kind_name(FailureKind k) noexcept {
  switch (k) {
    case FailureKind::incomplete: return "incomplete chain";
    case FailureKind::malformed: return "malformed artifact";
    case FailureKind::signature: return "signature verification failed";
    case FailureKind::linkage: return "linkage mismatch";
    case FailureKind::merkle_root: return "merkle root mismatch";
    case FailureKind::root_log: return "root log";
    case FailureKind::object: return "object integrity";
  }
  return "?";
}

bool ChainReport::stage_ok(Stage s) const noexcept {
  for (const auto& f : failures)
    if (f.stage == s) return false;
  return true;
}

bool ChainReport::merkle_mismatch() const noexcept {
  for (const auto& f : failures)
    if (f.kind == FailureKind::merkle_root) return true;
  return false;
}

bool ChainReport::incomplete() const noexcept {
  for (const auto& f : failures)
    if (f.kind == FailureKind::incomplete) return true;
  return false;
}

ChainReport verify_chain(const std::filesystem::path& dir, const ChainOptions& opts) {
  namespace fs = std::filesystem;
  const PipelineLayout L(dir);
  ChainReport rep;
  auto fail = [&](Stage s, FailureKind k, std::string detail) { rep.failures.push_back({s, k, std::move(detail)}); };

  std::map<Stage, StageFiles> files;
  for (Stage s : kAllStages) {
    if (static_cast<int>(s) > static_cast<int>(opts.upto)) break;
    rep.checked.push_back(s);
    auto& f = files[s];
    const Role role = role_for(s);
    std::vector<std::string> missing;
    if (!fs::is_regular_file(L.manifest(s))) missing.push_back(L.manifest(s).filename().string());
    if (!fs::is_regular_file(L.signature(s))) missing.push_back(L.signature(s).filename().string());
    if (!fs::is_regular_file(L.public_key(role))) missing.push_back(L.public_key(role).filename().string());
    if (fs::is_regular_file(L.manifest(s))) f.text = read_text_file(L.manifest(s));
    if (!missing.empty()) {
      std::string what;
      for (const auto& m : missing) what += (what.empty() ? "" : ", ") + m;
      fail(s, FailureKind::incomplete, "missing " + what);
      continue;
    }
    try {
      const PublicKey pk = parse_public_key(read_file(L.public_key(role)));
      if (pk.role != role) {
        fail(s, FailureKind::signature, "public key belongs to role " + std::string(role_name(pk.role)));
      } else {
        const StageSignature sig = parse_signature(read_file(L.signature(s)));
        if (!verify_manifest(pk, s, *f.text, sig)) fail(s, FailureKind::signature, "signature does not verify");
      }
    } catch (const Error& e) {
      fail(s, FailureKind::signature, e.what());
    }
  }

  for (auto& [s, f] : files) {
    if (!f.text) continue;
    try {
      f.parsed = parse_manifest(*f.text);
      if (f.parsed->stage != s) {
        fail(s, FailureKind::malformed, "file declares stage " + std::string(stage_name(f.parsed->stage)));
        f.parsed.reset();
      }
    } catch (const Error& e) {
      fail(s, FailureKind::malformed, e.what());
    }
  }

  for (auto& [s, f] : files) {
    const auto up = upstream_of(s);
    if (!up || !f.parsed) continue;
    const auto& upf = files[*up];
    if (!upf.text) continue;
    if (*f.parsed->prev != sha256(*upf.text))
      fail(s, FailureKind::linkage, "prev does not match the " + std::string(stage_name(*up)) + " manifest");
  }
  if (files.count(Stage::annotation) && files[Stage::raw].parsed && files[Stage::annotation].parsed) {
    std::map<std::string, Digest> raw;
    for (const auto& r : files[Stage::raw].parsed->raw) raw[r.id] = r.h_raw;
    const auto& ann = files[Stage::annotation].parsed->samples;
    bool same = ann.size() == raw.size();
    for (const auto& r : ann) {
      auto it = raw.find(r.id);
      same = same && it != raw.end() && it->second == r.h_raw;
    }
    if (!same) fail(Stage::annotation, FailureKind::linkage, "records do not match the raw manifest");
  }

  std::optional<Digest> committed;
  if (files.count(Stage::features) && files[Stage::features].text) {
    const auto& f = files[Stage::features];
    std::optional<Digest> recomputed;
    if (f.parsed) {
      try {
        recomputed = build_tree(f.parsed->samples).root();
      } catch (const Error& e) {
        fail(Stage::features, FailureKind::merkle_root, e.what());
      }
      if (recomputed && *recomputed != *f.parsed->root)
        fail(Stage::features, FailureKind::merkle_root,
             "records hash to " + to_hex(*recomputed) + ", manifest commits " + to_hex(*f.parsed->root));
    } else {
      fail(Stage::features, FailureKind::merkle_root, "root cannot be recomputed from an unparsable manifest");
    }
    try {
      committed = latest_root(L.roots_log(), Stage::features);
      const std::optional<Digest> claimed = f.parsed ? f.parsed->root : recomputed;
      if (claimed && *claimed != *committed)
        fail(Stage::features, FailureKind::merkle_root,
             "manifest root " + to_hex(*claimed) + " differs from the committed root " + to_hex(*committed));
    } catch (const NoCommittedRoot& e) {
      fail(Stage::features, FailureKind::root_log, e.what());
    } catch (const RootLogMissing& e) {
      fail(Stage::features, FailureKind::incomplete, e.what());
    } catch (const Error& e) {
      fail(Stage::features, FailureKind::root_log, e.what());
    }
  }
  for (Stage s : {Stage::splits, Stage::model}) {
    if (!files.count(s) || !files[s].parsed || !files.count(Stage::features) || !files[Stage::features].parsed) continue;
    if (*files[s].parsed->root != *files[Stage::features].parsed->root)
      fail(s, FailureKind::linkage, "root line differs from the features root");
  }
  if (files.count(Stage::splits) && files[Stage::splits].parsed && files[Stage::features].parsed) {
    const auto& feats = files[Stage::features].parsed->samples;
    const auto& splits = files[Stage::splits].parsed->splits;
    bool same = feats.size() == splits.size();
    for (std::size_t i = 0; same && i < feats.size(); ++i) same = feats[i].id == splits[i].id;
    if (!same) fail(Stage::splits, FailureKind::linkage, "split ids do not match the features manifest");
  }

  if (opts.check_objects) {
    const DirectoryObjectStore store(L.objects());
    auto check = [&](Stage s, const std::string& id, const Digest& d) {
      if (!store.contains(d)) fail(s, FailureKind::object, "object for '" + id + "' missing: " + to_hex(d));
      else if (!store.intact(d)) fail(s, FailureKind::object, "object for '" + id + "' altered: " + to_hex(d));
    };
    for (auto& [s, f] : files) {
      if (!f.parsed) continue;
      for (const auto& r : f.parsed->raw) check(s, r.id, r.h_raw);
      if (s == Stage::features)
        for (const auto& r : f.parsed->samples) {
          check(s, r.id, r.h_raw);
          check(s, r.id, r.h_feat);
        }
      for (const auto& r : f.parsed->artifacts) check(s, r.id, r.digest);
    }
  }
  return rep;
}

std::string render_chain_report(const ChainReport& r) {
  std::string out;
  for (Stage s : r.checked)
    out += std::string(r.stage_ok(s) ? "✓ " : "✗ ") + std::string(stage_name(s)) + (r.stage_ok(s) ? ": ok" : ": FAIL") + "\n";
  for (const auto& f : r.failures)
    out += "✗ " + std::string(stage_name(f.stage)) + ": " + std::string(failure_kind_name(f.kind)) + " (" + f.detail +
           ")\n";
  if (r.passed()) out += "chain verified: " + std::to_string(r.checked.size()) + " stages\n";
  else out += "first failure at " + std::string(stage_name(r.first()->stage)) + " stage\n";
  return out;
}

}  // namespace pbench
