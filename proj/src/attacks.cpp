#include "pbench/attacks.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "pbench/rng.hpp"

namespace pbench {

namespace {

std::map<std::string, Partition> partition_map(const StageManifest& splits) {
  if (splits.stage != Stage::splits) throw AttackError("expected a splits manifest");
  std::map<std::string, Partition> out;
  for (const auto& r : splits.splits) out[r.id] = r.partition;
  return out;
}

std::vector<std::string> select_victims(const StageManifest& manifest, const StageManifest& splits,
                                        const AttackConfig& cfg, FlipLog& log) {
  cfg.validate();
  const auto parts = partition_map(splits);
  std::vector<std::string> eligible;
  for (const auto& r : manifest.samples) {
    auto it = parts.find(r.id);
    if (r.label == cfg.source && it != parts.end() && it->second == Partition::train) eligible.push_back(r.id);
  }
  std::sort(eligible.begin(), eligible.end());
  log.config = cfg;
  log.eligible = eligible.size();
  log.requested = static_cast<std::size_t>(std::floor(cfg.rate * static_cast<double>(manifest.samples.size()) + 1e-9));
  const std::size_t k = std::min(log.requested, eligible.size());
  Rng rng = make_rng(cfg.seed, "attack:" + cfg.source);
  // Partial Fisher-Yates: the first k positions end up a uniform sample without replacement.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_below(rng, eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(k);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

std::string format_rate(double rate) {
  std::ostringstream os;
  os.precision(17);
  os << rate;
  return os.str();
}

}  // namespace

std::string_view attack_kind_name(AttackKind k) noexcept {
  return k == AttackKind::label_flip ? "label_flip" : "backdoor_patch";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "label_flip") return AttackKind::label_flip;
  if (name == "backdoor_patch" || name == "backdoor") return AttackKind::backdoor_patch;
  throw AttackError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw AttackError("rate must lie in [0, 1]");
  if (source == target) throw AttackError("source and target classes must differ");
  if (!std::isfinite(patch_value) || patch_value < 0.0f || patch_value > 1.0f)
    throw AttackError("patch_value must lie in [0, 1]");
}

std::pair<std::uint16_t, std::uint16_t> patch_dims(const AttackConfig& cfg, std::uint16_t rows) {
  if (cfg.patch) return *cfg.patch;
  const std::uint16_t side = rows >= 64 ? 12 : 3;
  return {side, side};
}

FeatureGrid stamp_patch(const FeatureGrid& g, const AttackConfig& cfg) {
  const auto [pr, pc] = patch_dims(cfg, g.rows);
  if (pr > g.rows || pc > g.cols)
    throw AttackError("patch " + std::to_string(pr) + "x" + std::to_string(pc) + " does not fit a " +
                      std::to_string(g.rows) + "x" + std::to_string(g.cols) + " grid");
  FeatureGrid out = g;
  for (std::size_t r = g.rows - pr; r < g.rows; ++r)
    for (std::size_t c = g.cols - pc; c < g.cols; ++c) out.at(r, c) = cfg.patch_value;
  return out;
}

FlipResult flip_labels(const StageManifest& annotation, const StageManifest& splits, const AttackConfig& cfg) {
  FlipResult out{annotation, {}};
  const auto victims = select_victims(annotation, splits, cfg, out.log);
  for (auto& r : out.manifest.samples) {
    if (!std::binary_search(victims.begin(), victims.end(), r.id)) continue;
    out.log.entries.push_back({r.id, r.label, cfg.target, false});
    r.label = cfg.target;
  }
  std::sort(out.log.entries.begin(), out.log.entries.end(),
            [](const FlipEntry& a, const FlipEntry& b) { return a.id < b.id; });
  return out;
}

BackdoorResult backdoor_attack(const StageManifest& manifest, const FeatureLookup& features,
                               const StageManifest& splits, const AttackConfig& cfg) {
  BackdoorResult out{manifest, {}, {}};
  const auto victims = select_victims(manifest, splits, cfg, out.log);
  for (auto& r : out.manifest.samples) {
    if (!std::binary_search(victims.begin(), victims.end(), r.id)) continue;
    FeatureGrid patched = stamp_patch(features(r), cfg);
    out.log.entries.push_back({r.id, r.label, cfg.target, true});
    r.label = cfg.target;
    r.h_feat = sha256(write_feature_file(patched));
    out.modified.emplace_back(r.id, std::move(patched));
  }
  std::sort(out.log.entries.begin(), out.log.entries.end(),
            [](const FlipEntry& a, const FlipEntry& b) { return a.id < b.id; });
  std::sort(out.modified.begin(), out.modified.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::vector<std::pair<std::string, FeatureGrid>> stamp_test_set(const StageManifest& manifest,
                                                                const FeatureLookup& features,
                                                                const StageManifest& splits, const std::string& cls,
                                                                const AttackConfig& cfg) {
  const auto parts = partition_map(splits);
  std::vector<std::pair<std::string, FeatureGrid>> out;
  for (const auto& r : manifest.samples) {
    auto it = parts.find(r.id);
    if (r.label != cls || it == parts.end() || it->second != Partition::test) continue;
    out.emplace_back(r.id, stamp_patch(features(r), cfg));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

namespace {

template <class T>
T parse_number(const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw AttackError("malformed number '" + text + "' in flip log");
  return v;
}

}  // namespace

std::string serialize_flip_log(const FlipLog& log) {
  const auto& c = log.config;
  std::string out;
  out += "# kind\t" + std::string(attack_kind_name(c.kind)) + "\n";
  out += "# rate\t" + format_rate(c.rate) + "\n";
  out += "# source\t" + c.source + "\n";
  out += "# target\t" + c.target + "\n";
  out += "# patch\t" + (c.patch ? std::to_string(c.patch->first) + "x" + std::to_string(c.patch->second) : "default") + "\n";
  out += "# patch_value\t" + format_rate(c.patch_value) + "\n";
  out += "# seed\t" + std::to_string(c.seed) + "\n";
  out += "# requested\t" + std::to_string(log.requested) + "\n";
  out += "# eligible\t" + std::to_string(log.eligible) + "\n";
  out += "# flipped\t" + std::to_string(log.entries.size()) + "\n";
  out += std::string("# clamped\t") + (log.clamped() ? "yes" : "no") + "\n";
  out += std::string("# vacuous\t") + (log.vacuous() ? "yes" : "no") + "\n";
  out += "id\told_label\tnew_label\tpatched\n";
  for (const auto& e : log.entries)
    out += e.id + '\t' + e.old_label + '\t' + e.new_label + '\t' + (e.patched ? "yes" : "no") + '\n';
  return out;
}

FlipLog parse_flip_log(std::string_view text) {
  FlipLog log;
  std::vector<std::string> lines;
  boost::split(lines, text, boost::is_any_of("\n"));
  bool header_seen = false;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    if (line.rfind("# ", 0) == 0) {
      boost::split(f, line.substr(2), boost::is_any_of("\t"));
      if (f.size() != 2) throw AttackError("malformed flip log line '" + line + "'");
      const auto& k = f[0];
      const auto& v = f[1];
      if (k == "kind") log.config.kind = parse_attack_kind(v);
      else if (k == "rate") log.config.rate = parse_number<double>(v);
      else if (k == "source") log.config.source = v;
      else if (k == "target") log.config.target = v;
      else if (k == "patch") {
        if (v != "default") {
          const auto x = v.find('x');
          if (x == std::string::npos) throw AttackError("malformed patch size '" + v + "'");
          log.config.patch = {{parse_number<std::uint16_t>(v.substr(0, x)), parse_number<std::uint16_t>(v.substr(x + 1))}};
        }
      } else if (k == "patch_value") log.config.patch_value = parse_number<float>(v);
      else if (k == "seed") log.config.seed = parse_number<std::uint64_t>(v);
      else if (k == "requested") log.requested = parse_number<std::size_t>(v);
      else if (k == "eligible") log.eligible = parse_number<std::size_t>(v);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    boost::split(f, line, boost::is_any_of("\t"));
    if (f.size() != 4) throw AttackError("malformed flip log entry '" + line + "'");
    log.entries.push_back({f[0], f[1], f[2], f[3] == "yes"});
  }
  return log;
}

}  // namespace pbench
