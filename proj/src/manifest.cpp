#include "pbench/manifest.hpp"

#include <algorithm>

namespace pbench {

namespace {

constexpr std::string_view kFormat = "pbench/1";

template <typename R>
std::vector<const R*> sorted_view(const std::vector<R>& records) {
  std::vector<const R*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](const R* a, const R* b) { return a->id < b->id; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!valid_id(out[i]->id)) throw ManifestError("invalid record id '" + out[i]->id + "'");
    if (i > 0 && out[i - 1]->id == out[i]->id) throw ManifestError("duplicate record id '" + out[i]->id + "'");
  }
  return out;
}

std::string digest_or_dash(const std::optional<Digest>& d) { return d ? to_hex(*d) : std::string("-"); }

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
  throw ManifestError("line " + std::to_string(line) + ": " + what);
}

Digest parse_digest_at(std::size_t line, std::string_view hex) {
  if (!is_digest_hex(hex)) fail_at(line, "malformed digest '" + std::string(hex) + "'");
  return digest_from_hex(hex);
}

std::optional<Digest> parse_optional_digest(std::size_t line, std::string_view text, std::string_view keyword) {
  if (text.substr(0, keyword.size() + 1) != std::string(keyword) + " ")
    fail_at(line, "expected '" + std::string(keyword) + " <digest|->'");
  auto value = text.substr(keyword.size() + 1);
  if (value == "-") return std::nullopt;
  return parse_digest_at(line, value);
}

}  // namespace

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::raw: return "raw";
    case Stage::annotation: return "annotation";
    case Stage::features: return "features";
    case Stage::splits: return "splits";
    case Stage::model: return "model";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kAllStages)
    if (stage_name(s) == name) return s;
  throw ManifestError("unknown stage '" + std::string(name) + "'");
}

std::optional<Stage> upstream_of(Stage s) noexcept {
  if (s == Stage::raw) return std::nullopt;
  return static_cast<Stage>(static_cast<int>(s) - 1);
}

std::string_view partition_name(Partition p) noexcept { return p == Partition::train ? "train" : "test"; }

Partition parse_partition(std::string_view name) {
  if (name == "train") return Partition::train;
  if (name == "test") return Partition::test;
  throw ManifestError("unknown partition '" + std::string(name) + "'");
}

bool stage_has_root(Stage s) noexcept { return s == Stage::features || s == Stage::splits || s == Stage::model; }

bool valid_id(std::string_view id) noexcept {
  if (id.empty()) return false;
  return std::none_of(id.begin(), id.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x20 || u == 0x7f;
  });
}

std::size_t StageManifest::size() const noexcept {
  switch (stage) {
    case Stage::raw: return raw.size();
    case Stage::annotation:
    case Stage::features: return samples.size();
    case Stage::splits: return splits.size();
    case Stage::model: return artifacts.size();
  }
  return 0;
}

std::string serialize_manifest(const StageManifest& m) {
  const Stage s = m.stage;
  const bool uses_samples = s == Stage::annotation || s == Stage::features;
  if ((s != Stage::raw && !m.raw.empty()) || (!uses_samples && !m.samples.empty()) ||
      (s != Stage::splits && !m.splits.empty()) || (s != Stage::model && !m.artifacts.empty()))
    throw ManifestError("records of the wrong kind for stage " + std::string(stage_name(s)));
  if (s == Stage::raw && m.prev) throw ManifestError("raw stage cannot reference an upstream manifest");
  if (s != Stage::raw && !m.prev) throw ManifestError("stage " + std::string(stage_name(s)) + " requires prev");
  if (!stage_has_root(s) && m.root) throw ManifestError("stage " + std::string(stage_name(s)) + " carries no root");
  if (stage_has_root(s) && !m.root) throw ManifestError("stage " + std::string(stage_name(s)) + " requires a root");

  std::string out;
  out.reserve(64 + m.size() * 160);
  out += kFormat;
  out += ' ';
  out += stage_name(s);
  out += '\n';
  out += "prev " + digest_or_dash(m.prev) + '\n';
  switch (s) {
    case Stage::raw:
      for (const auto* r : sorted_view(m.raw)) out += r->id + '\t' + to_hex(r->h_raw) + '\n';
      break;
    case Stage::annotation:
    case Stage::features:
      for (const auto* r : sorted_view(m.samples)) {
        if (!valid_id(r->label)) throw ManifestError("record '" + r->id + "' has an invalid label");
        out += r->id + '\t' + r->label + '\t' + to_hex(r->h_raw) + '\t' + to_hex(r->h_feat) + '\n';
      }
      break;
    case Stage::splits:
      for (const auto* r : sorted_view(m.splits)) out += r->id + '\t' + std::string(partition_name(r->partition)) + '\n';
      break;
    case Stage::model:
      for (const auto* r : sorted_view(m.artifacts)) out += r->id + '\t' + to_hex(r->digest) + '\n';
      break;
  }
  out += "root " + digest_or_dash(m.root) + '\n';
  return out;
}

StageManifest parse_manifest(std::string_view text) {
  if (text.empty() || text.back() != '\n') throw ManifestError("manifest must end with a line feed");
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  if (lines.size() < 3) throw ManifestError("truncated manifest: " + std::to_string(lines.size()) + " lines");

  StageManifest m;
  const auto header = lines[0];
  if (header.substr(0, kFormat.size() + 1) != std::string(kFormat) + " ") fail_at(1, "malformed header");
  try {
    m.stage = parse_stage(header.substr(kFormat.size() + 1));
  } catch (const ManifestError& e) {
    fail_at(1, e.what());
  }
  m.prev = parse_optional_digest(2, lines[1], "prev");
  if (m.stage == Stage::raw && m.prev) fail_at(2, "raw stage cannot reference an upstream manifest");
  if (m.stage != Stage::raw && !m.prev) fail_at(2, "missing upstream manifest digest");

  const std::size_t root_line = lines.size();
  m.root = parse_optional_digest(root_line, lines.back(), "root");
  if (stage_has_root(m.stage) != m.root.has_value())
    fail_at(root_line, m.root ? "stage carries no root" : "missing root digest");

  std::string prev_id;
  for (std::size_t i = 2; i + 1 < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    auto f = split_tabs(lines[i]);
    const std::string id(f[0]);
    if (!valid_id(id)) fail_at(ln, "invalid id");
    if (i > 2) {
      if (id == prev_id) fail_at(ln, "duplicate id '" + id + "'");
      if (id < prev_id) throw ManifestError("unsorted at line " + std::to_string(ln));
    }
    prev_id = id;
    auto expect = [&](std::size_t n) {
      if (f.size() != n)
        fail_at(ln, "expected " + std::to_string(n) + " fields, found " + std::to_string(f.size()));
    };
    switch (m.stage) {
      case Stage::raw:
        expect(2);
        m.raw.push_back({id, parse_digest_at(ln, f[1])});
        break;
      case Stage::annotation:
      case Stage::features:
        expect(4);
        if (!valid_id(f[1])) fail_at(ln, "invalid label");
        m.samples.push_back({id, std::string(f[1]), parse_digest_at(ln, f[2]), parse_digest_at(ln, f[3])});
        break;
      case Stage::splits:
        expect(2);
        try {
          m.splits.push_back({id, parse_partition(f[1])});
        } catch (const ManifestError& e) {
          fail_at(ln, e.what());
        }
        break;
      case Stage::model:
        expect(2);
        m.artifacts.push_back({id, parse_digest_at(ln, f[1])});
        break;
    }
  }
  return m;
}

Digest manifest_digest(const StageManifest& m) { return sha256(serialize_manifest(m)); }

}  // namespace pbench
