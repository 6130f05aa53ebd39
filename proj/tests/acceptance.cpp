// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "pbench/chain.hpp"
#include "pbench/detect.hpp"
#include "pbench/experiment.hpp"
#include "pbench/merkle.hpp"
#include "pbench/metrics.hpp"
#include "pbench/model.hpp"
#include "pbench/report.hpp"

using namespace pbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kMinCleanAccuracy = 0.85;
constexpr double kMaxSeedSpread = 0.02;
constexpr double kMaxRunSeconds = 60.0;
constexpr double kMinFlipAsr = 0.90;
constexpr double kBetaSlack = 0.01;
constexpr double kMinBackdoorAsr = 0.90;
constexpr double kMaxAsrGap = 0.05;
constexpr double kMaxGradError = 1e-4;
constexpr double kMinPatchTpr = 0.95;
constexpr double kMaxPatchFpr = 0.01;
constexpr double kMaxSweepSeconds = 300.0;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
const std::vector<double> kRates = {0.005, 0.01, 0.02};

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string pct(double v) { return fixed(100 * v, 2) + "%"; }

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pbench-accept-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("cd '") + dir.string() + "' && '" + PBENCH_CLI + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  return r;
}

bool has_line(const std::string& text, const std::string& line) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l == line) return true;
  return false;
}

// Every cell of one seed, trained from the same prepared data.
struct SeedRuns {
  PreparedData prep;
  CellOutcome clean;
  std::map<double, CellOutcome> flip;
  CellOutcome backdoor;
  double clean_seconds = 0;
};

std::vector<std::pair<std::string, FeatureGrid>> training_grids(const SeedRuns& s, const CellOutcome& cell) {
  std::map<std::string, const FeatureGrid*> patched;
  for (const auto& [id, g] : cell.patched) patched[id] = &g;
  std::vector<std::pair<std::string, FeatureGrid>> out;
  for (const auto& a : s.prep.split.assignments) {
    if (a.partition != Partition::train) continue;
    auto it = patched.find(a.id);
    out.emplace_back(a.id, it != patched.end() ? *it->second : s.prep.data.by_id(a.id).grid);
  }
  return out;
}

std::vector<SeedRuns> run_seeds() {
  const GenConfig gen = default_gen_config();
  std::vector<SeedRuns> runs;
  for (auto seed : kSeeds) {
    SeedRuns s;
    TrainConfig train;
    train.seed = seed;
    AttackConfig attack;
    attack.seed = seed;
    const auto start = Clock::now();
    s.prep = prepare_data(gen, 0.7, seed, attack);
    s.clean = run_cell(s.prep, train, std::nullopt);
    s.clean_seconds = seconds_since(start);
    for (double rate : kRates) {
      attack.rate = rate;
      s.flip.emplace(rate, run_cell(s.prep, train, attack, &s.clean.metrics));
    }
    attack.kind = AttackKind::backdoor_patch;
    attack.rate = 0.005;
    s.backdoor = run_cell(s.prep, train, attack, &s.clean.metrics);
    runs.push_back(std::move(s));
  }
  return runs;
}

void clean_baseline(const std::vector<SeedRuns>& runs) {
  bool ok = true;
  double lo = 1, hi = 0, slowest = 0;
  std::string accs;
  for (const auto& s : runs) {
    const double a = s.clean.metrics.overall_accuracy;
    ok = ok && a >= kMinCleanAccuracy;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    slowest = std::max(slowest, s.clean_seconds);
    accs += (accs.empty() ? "" : "/") + pct(a);
  }
  ok = ok && hi - lo <= kMaxSeedSpread && slowest <= kMaxRunSeconds;
  verdict(1, "clean baseline", ok,
          "accuracy " + accs + ", spread " + fixed(100 * (hi - lo), 2) + "pp, slowest run " + fixed(slowest, 1) + "s");
}

void label_flip_asr(const std::vector<SeedRuns>& runs) {
  std::vector<double> asr;
  bool counts = true;
  for (const auto& s : runs) {
    const auto& c = s.flip.at(0.005);
    asr.push_back(*c.metrics.asr_clean);
    counts = counts && c.record.flipped == 48;
  }
  const auto ci = ci_across_seeds(asr);
  verdict(2, "label-flip ASR at 0.5%", counts && ci.mean / 100 >= kMinFlipAsr,
          "mean ASR " + fixed(ci.mean, 2) + "% [" + fixed(ci.lo, 2) + ", " + fixed(ci.hi, 2) + "], 48 flips " +
              (counts ? "every seed" : "NOT every seed"));
}

void stealth(const std::vector<SeedRuns>& runs) {
  bool ok = true;
  double worst_margin = 1;
  std::size_t alerts = 0;
  for (const auto& s : runs) {
    for (const auto& [rate, c] : s.flip) {
      const double delta = std::abs(s.clean.metrics.overall_accuracy - c.metrics.overall_accuracy);
      const double allowed = *c.metrics.beta_test + kBetaSlack;
      worst_margin = std::min(worst_margin, allowed - delta);
      ok = ok && delta <= allowed;
      if (accuracy_monitor(s.clean.metrics, c.metrics).triggered) ++alerts;
    }
  }
  ok = ok && alerts == 0;
  verdict(3, "accuracy stays within beta", ok,
          "smallest margin to beta+1pp " + fixed(100 * worst_margin, 2) + "pp, accuracy alerts " +
              std::to_string(alerts) + "/9");
}

void beta_theorem() {
  std::mt19937_64 rng(2024);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 400;
    const int classes = 2 + static_cast<int>(rng() % 5);
    const int c = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
    std::vector<int> truths(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      truths[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
      a[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
      b[i] = truths[i] == c ? static_cast<int>(rng() % static_cast<std::uint64_t>(classes)) : a[i];
    }
    std::size_t correct_a = 0, correct_b = 0, in_c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      correct_a += a[i] == truths[i];
      correct_b += b[i] == truths[i];
      in_c += truths[i] == c;
    }
    const std::size_t gap = correct_a > correct_b ? correct_a - correct_b : correct_b - correct_a;
    const auto r = beta_bound_check(a, b, truths, c);
    if (!r.premise || !r.holds || gap > in_c) ++violations;
  }
  verdict(4, "beta bound", violations == 0, std::to_string(violations) + " violations in 1000 random pairs");
}

void backdoor(const std::vector<SeedRuns>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& s : runs) {
    const double clean = *s.backdoor.metrics.asr_clean;
    const double trig = *s.backdoor.metrics.asr_triggered;
    ok = ok && clean >= kMinBackdoorAsr && trig >= kMinBackdoorAsr && std::abs(clean - trig) <= kMaxAsrGap;
    detail += (detail.empty() ? "seed " : "; seed ") + std::to_string(s.backdoor.record.seed) + " clean " + pct(clean) +
              " triggered " + pct(trig);
  }
  verdict(5, "backdoor clean vs triggered ASR", ok, detail);
}

std::vector<SampleRecord> records(std::size_t n, std::uint64_t seed) {
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

void merkle_suite() {
  std::size_t bad_a = 0, bad_c = 0, proofs = 0, tampered = 0;
  for (std::size_t n = 1; n <= 64; ++n) {
    const auto recs = records(n, n);
    const auto tree = build_tree(recs);
    for (std::size_t i = 0; i < n; ++i) {
      const auto proof = prove_inclusion(tree, i);
      ++proofs;
      if (!verify_inclusion(recs[i], proof)) ++bad_a;
      for (std::size_t k = 0; k < proof.path.size(); ++k) {
        for (std::size_t byte = 0; byte < 32; ++byte) {
          auto t = proof;
          t.path[k].sibling[byte] ^= 0x01;
          ++tampered;
          if (verify_inclusion(recs[i], t)) ++bad_c;
        }
        auto t = proof;
        t.path[k].side = t.path[k].side == Side::left ? Side::right : Side::left;
        ++tampered;
        if (verify_inclusion(recs[i], t)) ++bad_c;
      }
      auto t = proof;
      t.root[i % 32] ^= 0x80;
      ++tampered;
      if (verify_inclusion(recs[i], t)) ++bad_c;
    }
  }

  const auto base = records(1000, 7);
  const auto root = build_tree(base).root();
  std::mt19937_64 rng(8);
  std::size_t unchanged = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = base;
    auto& r = m[rng() % m.size()];
    switch (trial % 3) {
      case 0: r.label = r.label == "Car" ? "Truck" : "Car"; break;
      case 1: r.h_raw[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
      case 2: r.h_feat[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
    }
    if (build_tree(m).root() == root) ++unchanged;
  }

  std::size_t below = 0, above = 0, checked = 0;
  std::string first_below;
  for (std::size_t n = 1; n <= 4096; ++n) {
    std::vector<Digest> leaves(n);
    for (std::size_t i = 0; i < n; ++i) leaves[i] = sha256(std::string_view(reinterpret_cast<const char*>(&i), sizeof i));
    const MerkleTree tree(leaves);
    const auto lo = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n))));
    const auto hi = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i) {
      const auto len = prove_inclusion(tree, i).path.size();
      ++checked;
      if (len > hi) ++above;
      if (len < lo) {
        if (below++ == 0)
          first_below = "N=" + std::to_string(n) + " leaf " + std::to_string(i) + " has length " +
                        std::to_string(len) + " < " + std::to_string(lo);
      }
    }
  }

  const bool ok = bad_a == 0 && bad_c == 0 && unchanged == 0 && below == 0 && above == 0;
  std::string detail = "(a) " + std::to_string(proofs - bad_a) + "/" + std::to_string(proofs) + " proofs verify, (b) " +
                       std::to_string(100 - unchanged) + "/100 mutations change the root, (c) " +
                       std::to_string(tampered - bad_c) + "/" + std::to_string(tampered) +
                       " tampered proofs rejected, (d) " + std::to_string(below) + " below floor and " +
                       std::to_string(above) + " above ceil of " + std::to_string(checked);
  if (below) detail += "; first: " + first_below;
  verdict(6, "Merkle suite", ok, detail);
}

void mutate_first_record(const fs::path& manifest) {
  auto text = read_text_file(manifest);
  const auto line2 = text.find('\n', text.find('\n') + 1);
  const auto end = text.find('\n', line2 + 1);
  char& c = text[end - 1];
  c = std::isxdigit(static_cast<unsigned char>(c)) ? (c == '0' ? '1' : '0') : static_cast<char>(c ^ 0x01);
  write_file_atomic(manifest, std::string_view(text));
}

void signature_chain() {
  TempDir dir;
  const auto run = cli(dir.path, "--out clean run");
  const auto clean = cli(dir.path, "verify-chain clean");
  bool ok = run.code == 0 && clean.code == 0 && clean.out.find("chain verified: 5 stages") != std::string::npos;
  std::string detail = "clean run exit " + std::to_string(run.code) + ", verify-chain exit " + std::to_string(clean.code);

  const std::string merkle_line(kMerkleAbortLine);
  for (Stage s : kAllStages) {
    const std::string name(stage_name(s));
    const fs::path copy = dir.path / ("mut-" + name);
    fs::copy(dir.path / "clean", copy, fs::copy_options::recursive);
    mutate_first_record(PipelineLayout(copy).manifest(s));
    const auto r = cli(dir.path, "verify-chain " + copy.filename().string());
    const bool named = r.err.rfind("\xE2\x9C\x97 " + name + ": signature", 0) == 0;
    const bool merkle = has_line(r.err, merkle_line);
    const bool stage_ok = r.code == 2 && named && (s == Stage::features ? merkle : !merkle);
    ok = ok && stage_ok;
    detail += "; " + name + " exit " + std::to_string(r.code) + (named ? " signature" : " UNNAMED") +
              (merkle ? " +merkle" : "");
  }
  verdict(7, "signature chain", ok, detail);
}

void gradient() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Examples tiny;
  tiny.dim = 16;
  for (int i = 0; i < 10; ++i) {
    for (std::size_t d = 0; d < tiny.dim; ++d) tiny.x.push_back(u(rng));
    tiny.y.push_back(i % 6);
  }
  TrainConfig cfg;
  cfg.hidden = 8;
  const double err = gradient_check(cfg, tiny, 6);
  const double corrupted = gradient_check(cfg, tiny, 6, [](Mlp<double>& g) { g.b1[0] += 0.05; });
  verdict(8, "gradient check", err <= kMaxGradError && corrupted > kMaxGradError,
          "max relative error " + fixed(err, 10) + ", corrupted gradient " + fixed(corrupted, 6));
}

void control_matrix(const std::vector<SeedRuns>& runs) {
  bool ok = true;
  std::string detail;
  std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
  for (const auto& s : runs) {
    const auto& flip = s.flip.at(0.005);
    const auto region = patch_dims(AttackConfig{}, s.prep.data.samples.front().grid.rows);
    const Region r{region.first, region.second};

    const bool f_class = per_class_monitor(s.clean.metrics, flip.metrics).triggered;
    const bool f_acc = accuracy_monitor(s.clean.metrics, flip.metrics).triggered;
    const bool f_drift = label_drift_monitor(s.prep.data.features_manifest, flip.poisoned).triggered;
    const bool f_patch = patch_detector(training_grids(s, flip), r).report.triggered;

    const auto scan = patch_detector(training_grids(s, s.backdoor), r);
    const bool b_patch = scan.report.triggered;
    const bool b_acc = accuracy_monitor(s.clean.metrics, s.backdoor.metrics).triggered;
    std::set<std::string> patched;
    for (const auto& [id, g] : s.backdoor.patched) patched.insert(id);
    const auto rates = score_detection(scan.report.flagged_ids, patched, scan.statistic.size());
    tp += rates.true_positives;
    fp += rates.false_positives;
    pos += rates.positives;
    neg += rates.negatives;

    const bool seed_ok = f_class && !f_acc && f_drift && !f_patch && b_patch && !b_acc;
    ok = ok && seed_ok;
    if (!seed_ok)
      detail += "seed " + std::to_string(s.backdoor.record.seed) + " flip(class " + std::to_string(f_class) +
                ", acc " + std::to_string(f_acc) + ", drift " + std::to_string(f_drift) + ", patch " +
                std::to_string(f_patch) + ") backdoor(patch " + std::to_string(b_patch) + ", acc " +
                std::to_string(b_acc) + "); ";
  }
  const double tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  const double fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 1.0;
  ok = ok && tpr >= kMinPatchTpr && fpr <= kMaxPatchFpr;
  if (detail.empty()) detail = "alert matrix matches on every seed; ";
  detail += "patch TPR " + fixed(tpr, 4) + " (" + std::to_string(tp) + "/" + std::to_string(pos) + "), FPR " +
            fixed(fpr, 4) + " (" + std::to_string(fp) + "/" + std::to_string(neg) + ")";
  verdict(9, "detection controls", ok, detail);
}

void full_sweep() {
  const ExperimentPlan plan;
  const auto start = Clock::now();
  const auto first = run_sweep(plan);
  const double elapsed = seconds_since(start);
  const auto second = run_sweep(plan);
  const auto a = report_render(first);
  const auto b = report_render(second);
  std::size_t failed = 0;
  for (const auto& c : first) failed += c.failed;
  const bool identical = a.machine_cells == b.machine_cells && a.machine_summary == b.machine_summary;
  verdict(10, "full sweep", elapsed <= kMaxSweepSeconds && identical && failed == 0 && first.size() == 24,
          std::to_string(first.size()) + " cells in " + fixed(elapsed, 1) + "s, " + std::to_string(failed) +
              " failed, rerun " + (identical ? "byte-identical" : "DIFFERS"));
}

}  // namespace

int main() {
  try {
    const auto runs = run_seeds();
    clean_baseline(runs);
    label_flip_asr(runs);
    stealth(runs);
    beta_theorem();
    backdoor(runs);
    merkle_suite();
    signature_chain();
    gradient();
    control_matrix(runs);
    full_sweep();
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
