// pbench: poisoning and provenance benchmark command line.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>

#include "pbench/chain.hpp"
#include "pbench/config.hpp"
#include "pbench/detect.hpp"
#include "pbench/experiment.hpp"
#include "pbench/merkle.hpp"
#include "pbench/object_store.hpp"
#include "pbench/pipeline.hpp"
#include "pbench/report.hpp"
#include "pbench/rng.hpp"

namespace fs = std::filesystem;
using namespace pbench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAbort = 2;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "pbench-run";
  bool no_verify = false;
};

Config load_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : Config::load(g.config_path);
  if (g.seed) c.set("seed", std::to_string(*g.seed));
  return c;
}

void print_failure(const ChainFailure& f) {
  std::cerr << "✗ " << stage_name(f.stage) << ": " << failure_kind_name(f.kind) << " (" << f.detail << ")\n";
}

void print_abort(const ChainReport& r, bool all_failures) {
  if (all_failures) {
    for (const auto& f : r.failures) print_failure(f);
  } else if (!r.failures.empty()) {
    print_failure(*r.first());
  }
  if (r.merkle_mismatch()) std::cerr << kMerkleAbortLine << "\n";
}

void warn_no_verify() {
  std::cerr << "!!! VERIFICATION DISABLED (--no-verify): training on unverified artifacts, attacker-success mode !!!\n";
}

AttackConfig attack_from(const Config& c, const std::string& kind, std::optional<double> rate,
                         const std::string& source, const std::string& target) {
  AttackConfig a = attack_config_from(c);
  if (!kind.empty()) a.kind = parse_attack_kind(kind);
  if (rate) a.rate = *rate;
  if (!source.empty()) a.source = source;
  if (!target.empty()) a.target = target;
  a.validate();
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisoning attacks and signed Merkle provenance for a desk-scale classification pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for generation, split, attack and training");
  app.add_option("--out", g.out, "pipeline or sweep directory");
  app.add_flag("--no-verify", g.no_verify, "skip verify-before-consume (attacker-success mode)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate the synthetic dataset, objects and stage manifests");
  double train_fraction = 0.7;
  gen->add_option("--train-fraction", train_fraction, "per-class train share");

  // keygen
  auto* kg = app.add_subcommand("keygen", "create a stage keypair under <out>/keys");
  std::string role_opt, scheme = std::string(kDefaultScheme);
  bool all_roles = false;
  kg->add_option("--role", role_opt, "device|annotator|pipeline|orchestrator|trainer");
  kg->add_flag("--all", all_roles, "create keys for every role");
  kg->add_option("--scheme", scheme, "signature scheme");

  // sign
  auto* sign = app.add_subcommand("sign", "sign one stage manifest with its role key");
  std::string stage_opt;
  sign->add_option("--stage", stage_opt, "raw|annotation|features|splits|model")->required();

  // commit
  auto* commit = app.add_subcommand("commit", "record the features Merkle root in the append-only log");
  std::string prove_id;
  commit->add_option("--prove", prove_id, "also write an inclusion proof for this sample id");

  // attack
  auto* attack = app.add_subcommand("attack", "poison the stored manifests (and feature files)");
  std::string kind_opt, source_opt, target_opt;
  std::optional<double> rate_opt;
  attack->add_option("--kind", kind_opt, "label_flip|backdoor_patch");
  attack->add_option("--rate", rate_opt, "poisoning rate as a fraction of N");
  attack->add_option("--source", source_opt, "source class");
  attack->add_option("--target", target_opt, "target class");

  // train
  auto* trn = app.add_subcommand("train", "verify the chain, then train on the training partition");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate the stored checkpoint");

  // verify-chain
  auto* vc = app.add_subcommand("verify-chain", "verify signatures, linkage, Merkle root and objects");
  std::string vc_dir;
  vc->add_option("dir", vc_dir, "pipeline directory");

  // detect
  auto* det = app.add_subcommand("detect", "run the statistical controls on two runs");
  std::string baseline_dir, current_dir;
  double z_threshold = 6.0, acc_pp = 3.0, recall_drop = 0.20;
  det->add_option("--baseline", baseline_dir, "clean run directory")->required();
  det->add_option("--current", current_dir, "run directory to inspect")->required();
  det->add_option("--z", z_threshold, "patch detector z threshold");
  det->add_option("--accuracy-pp", acc_pp, "accuracy monitor threshold in percentage points");
  det->add_option("--recall-drop", recall_drop, "per-class recall drop threshold");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run the rate x seed x attack sweep in memory");
  std::vector<double> rates;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> kinds;
  sw->add_option("--rates", rates, "poisoning rates")->delimiter(',');
  sw->add_option("--seeds", seeds, "seeds")->delimiter(',');
  sw->add_option("--kinds", kinds, "attack kinds")->delimiter(',');

  // report
  auto* rep = app.add_subcommand("report", "render tables from a sweep's cells.tsv");
  std::string report_dir;
  rep->add_option("dir", report_dir, "sweep directory (defaults to --out)");

  // run
  auto* run = app.add_subcommand("run", "full signed pipeline, optionally with an injected attack");
  std::string run_kind;
  std::optional<double> run_rate;
  run->add_option("--attack", run_kind, "label_flip|backdoor_patch");
  run->add_option("--rate", run_rate, "poisoning rate");
  run->add_option("--scheme", scheme, "signature scheme");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Config cfg = load_config(g);
    const PipelineLayout L(g.out);

    if (*gen) {
      GenConfig gc = gen_config_from(cfg);
      const Dataset ds = stage_generate(L, gc, cfg.get_double("train_fraction", train_fraction));
      std::cout << "generated " << ds.samples.size() << " samples (seed " << gc.seed << ", prng " << kRngName
                << ") into " << L.root << "\n";
      std::cout << "features root " << to_hex(*ds.features_manifest.root) << "\n";
      return kExitOk;
    }
    if (*kg) {
      if (!all_roles && role_opt.empty()) throw CLI::ValidationError("keygen", "--role or --all is required");
      std::vector<Role> roles;
      if (all_roles) roles.assign(std::begin(kAllRoles), std::end(kAllRoles));
      else roles.push_back(parse_role(role_opt));
      for (Role r : roles) {
        const StageKeypair kp = ensure_keypair(L, r, scheme);
        std::cout << role_name(r) << "\t" << kp.scheme << "\tpublic " << kp.public_key.size() << " bytes\t"
                  << to_hex(sha256(kp.public_key)) << "\n";
      }
      return kExitOk;
    }
    if (*sign) {
      const Stage s = parse_stage(stage_opt);
      const StageSignature sig = sign_stage(L, s);
      std::cout << "signed " << stage_name(s) << " manifest " << to_hex(sig.manifest_hash) << " ("
                << sig.signature.size() << "-byte signature)\n";
      return kExitOk;
    }
    if (*commit) {
      const Digest root = stage_commit(L);
      std::cout << "committed features root " << to_hex(root) << " to " << L.roots_log() << "\n";
      if (!prove_id.empty()) {
        const StageManifest m = read_manifest(L, Stage::features);
        const MerkleTree tree = build_tree(m.samples);
        auto it = std::find_if(m.samples.begin(), m.samples.end(), [&](const SampleRecord& r) { return r.id == prove_id; });
        if (it == m.samples.end()) throw Error("no sample '" + prove_id + "' in the features manifest");
        const auto proof = prove_inclusion(tree, static_cast<std::size_t>(it - m.samples.begin()));
        const fs::path p = L.root / "proofs" / (prove_id + ".proof");
        write_file_atomic(p, serialize_proof(proof));
        std::cout << "proof for " << prove_id << " (" << proof.path.size() << " hashes) written to " << p << "\n";
      }
      return kExitOk;
    }
    if (*attack) {
      const AttackConfig a = attack_from(cfg, kind_opt, rate_opt, source_opt, target_opt);
      const FlipLog log = stage_attack(L, a);
      std::cout << attack_kind_name(a.kind) << ": " << log.entries.size() << " records poisoned (requested "
                << log.requested << ", eligible " << log.eligible << ")";
      if (log.clamped()) std::cout << " [clamped to available source-class training records]";
      if (log.vacuous()) std::cout << " [warning: attack is vacuous]";
      std::cout << "\nflip log: " << L.flip_log() << "\n";
      return kExitOk;
    }
    if (*trn) {
      if (g.no_verify) warn_no_verify();
      TrainConfig tc = train_config_from(cfg);
      const GenConfig gc = gen_config_from(cfg);
      try {
        const TrainOutcome t = stage_train(L, gc.class_names(), tc, !g.no_verify);
        std::cout << "trained: final loss " << fixed(t.model.meta.final_loss) << ", checkpoint " << to_hex(t.checkpoint)
                  << "\n";
      } catch (const VerificationAbort& e) {
        print_abort(e.report(), true);
        return kExitAbort;
      }
      return kExitOk;
    }
    if (*ev) {
      const AttackConfig a = attack_from(cfg, "", std::nullopt, "", "");
      const MetricsReport m = stage_eval(L, a);
      std::cout << "accuracy " << fixed(100 * m.overall_accuracy, 2) << "%";
      if (m.asr_clean) std::cout << ", clean ASR " << fixed(100 * *m.asr_clean, 2) << "%";
      if (m.asr_triggered) std::cout << ", triggered ASR " << fixed(100 * *m.asr_triggered, 2) << "%";
      std::cout << "\n" << metrics_tsv(m);
      return kExitOk;
    }
    if (*vc) {
      const fs::path dir = vc_dir.empty() ? fs::path(g.out) : fs::path(vc_dir);
      const ChainReport r = verify_chain(dir);
      if (r.passed()) {
        std::cout << render_chain_report(r);
        return kExitOk;
      }
      std::cout << render_chain_report(r);
      print_abort(r, false);
      return kExitAbort;
    }
    if (*det) {
      const PipelineLayout B(baseline_dir), C(current_dir);
      const MetricsReport mb = parse_metrics_tsv(read_text_file(B.metrics()));
      const MetricsReport mc = parse_metrics_tsv(read_text_file(C.metrics()));
      const auto acc = accuracy_monitor(mb, mc, acc_pp);
      const auto cls = per_class_monitor(mb, mc, recall_drop);
      const auto drift = label_drift_monitor(read_manifest(B, Stage::annotation), read_manifest(C, Stage::annotation));
      const StageManifest feats = read_manifest(C, Stage::features);
      const StageManifest splits = read_manifest(C, Stage::splits);
      std::set<std::string> train_ids;
      for (const auto& r : splits.splits)
        if (r.partition == Partition::train) train_ids.insert(r.id);
      DirectoryObjectStore store(C.objects());
      std::vector<std::pair<std::string, FeatureGrid>> grids;
      for (const auto& r : feats.samples)
        if (train_ids.count(r.id)) grids.emplace_back(r.id, read_feature_file(store.get(r.h_feat)));
      const AttackConfig a = attack_config_from(cfg);
      const auto [pr, pc] = patch_dims(a, grids.empty() ? 16 : grids.front().second.rows);
      const auto patch = patch_detector(grids, {pr, pc}, z_threshold).report;
      for (const auto* r : {&acc, &cls, &drift, &patch}) std::cout << render_alert(*r);
      std::cout << "\nControl                  | Triggered\n";
      std::cout << "-------------------------+----------\n";
      for (const auto* r : {&acc, &cls, &drift, &patch}) {
        std::string name = r->control;
        name.resize(24, ' ');
        std::cout << name << " | " << (r->triggered ? "Yes" : "No") << "\n";
      }
      return kExitOk;
    }
    if (*sw) {
      ExperimentPlan plan = plan_from(cfg);
      if (!rates.empty()) plan.rates = rates;
      if (!seeds.empty()) plan.seeds = seeds;
      if (!kinds.empty()) {
        plan.kinds.clear();
        for (const auto& k : kinds) plan.kinds.push_back(parse_attack_kind(k));
      }
      plan.validate();
      const auto start = std::chrono::steady_clock::now();
      const auto cells = run_sweep(plan, [](const CellRecord& c) {
        std::cerr << attack_kind_name(c.kind) << " rate " << fixed(c.rate, 4) << " seed " << c.seed << ": "
                  << (c.failed ? "FAILED " + c.error : "acc " + fixed(c.accuracy, 4)) << " (" << fixed(c.seconds, 1)
                  << " s)\n";
      });
      const RenderedReport r = report_render(cells);
      fs::create_directories(g.out);
      write_file_atomic(fs::path(g.out) / "cells.tsv", r.machine_cells);
      write_file_atomic(fs::path(g.out) / "summary.tsv", r.machine_summary);
      write_file_atomic(fs::path(g.out) / "tables.txt", r.human);
      std::cout << r.human;
      std::cout << "\nsweep finished in "
                << fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1)
                << " s; machine reports in " << g.out << "\n";
      return kExitOk;
    }
    if (*rep) {
      const fs::path dir = report_dir.empty() ? fs::path(g.out) : fs::path(report_dir);
      const RenderedReport r = report_render(parse_cells_tsv(read_text_file(dir / "cells.tsv")));
      std::cout << r.human;
      return kExitOk;
    }
    if (*run) {
      RunOptions o;
      o.gen = gen_config_from(cfg);
      o.train = train_config_from(cfg);
      o.train_fraction = cfg.get_double("train_fraction", o.train_fraction);
      o.verify = !g.no_verify;
      o.scheme = scheme;
      o.out = g.out;
      if (!run_kind.empty()) o.attack = attack_from(cfg, run_kind, run_rate, "", "");
      if (!o.verify) warn_no_verify();
      const RunRecord r = run_pipeline(o);
      if (r.flips) std::cout << "attack injected: " << r.flips->entries.size() << " records poisoned\n";
      if (!r.completed) {
        std::cout << "run aborted before training; first failure at " << stage_name(*r.caught_at) << " stage\n";
        std::cerr << r.abort_message;
        return r.exit_code;
      }
      std::cout << "run completed; accuracy " << fixed(100 * r.metrics->overall_accuracy, 2) << "%";
      if (r.metrics->asr_clean) std::cout << ", clean ASR " << fixed(100 * *r.metrics->asr_clean, 2) << "%";
      if (r.metrics->asr_triggered) std::cout << ", triggered ASR " << fixed(100 * *r.metrics->asr_triggered, 2) << "%";
      std::cout << "\n";
      return kExitOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
