#include "pbench/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "pbench/merkle.hpp"
#include "pbench/object_store.hpp"
#include "pbench/report.hpp"

namespace pbench {

namespace fs = std::filesystem;

namespace {

std::map<std::string, Partition> partitions_of(const StageManifest& splits) {
  std::map<std::string, Partition> out;
  for (const auto& r : splits.splits) out[r.id] = r.partition;
  return out;
}

int index_of(const std::vector<std::string>& classes, const std::string& label) {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw ModelError("label '" + label + "' is not in the class list");
  return static_cast<int>(it - classes.begin());
}

FeatureGrid load_grid(const ObjectStore& store, const Digest& d) { return read_feature_file(store.get(d)); }

std::string abort_text(const ChainReport& r) {
  std::string out;
  for (const auto& f : r.failures)
    out += "✗ " + std::string(stage_name(f.stage)) + ": " + std::string(failure_kind_name(f.kind)) + " (" + f.detail +
           ")\n";
  if (r.merkle_mismatch()) out += std::string(kMerkleAbortLine) + "\n";
  return out;
}

}  // namespace

VerificationAbort::VerificationAbort(Stage consumer, ChainReport report)
    : Error("verification failed before the " + std::string(stage_name(consumer)) + " stage" +
            (report.first() ? ": first failure at " + std::string(stage_name(report.first()->stage)) : "")),
      consumer_(consumer),
      report_(std::move(report)) {}

StageKeypair ensure_keypair(const PipelineLayout& L, Role role, std::string_view scheme) {
  if (fs::exists(L.secret_key(role))) {
    StageKeypair kp = parse_keypair(read_file(L.secret_key(role)));
    if (!fs::exists(L.public_key(role))) write_file_atomic(L.public_key(role), serialize_public_key(kp.public_part()));
    return kp;
  }
  StageKeypair kp = keygen(role, scheme);
  write_file_atomic(L.secret_key(role), serialize_keypair(kp));
  write_file_atomic(L.public_key(role), serialize_public_key(kp.public_part()));
  return kp;
}

void write_manifest(const PipelineLayout& L, const StageManifest& m) {
  write_file_atomic(L.manifest(m.stage), serialize_manifest(m));
}

StageManifest read_manifest(const PipelineLayout& L, Stage s) {
  StageManifest m = parse_manifest(read_text_file(L.manifest(s)));
  if (m.stage != s) throw ManifestError(L.manifest(s).string() + " declares stage " + std::string(stage_name(m.stage)));
  return m;
}

StageSignature sign_stage(const PipelineLayout& L, Stage s) {
  const Role role = role_for(s);
  if (!fs::exists(L.secret_key(role)))
    throw SigningError("no key for role " + std::string(role_name(role)) + " at " + L.secret_key(role).string());
  const StageKeypair kp = parse_keypair(read_file(L.secret_key(role)));
  const StageSignature sig = sign_manifest(kp, s, read_file(L.manifest(s)));
  write_file_atomic(L.signature(s), serialize_signature(sig));
  return sig;
}

void verify_before_consume(const PipelineLayout& L, Stage upstream, Stage consumer) {
  ChainReport rep = verify_chain(L.root, {upstream, true});
  if (!rep.passed()) throw VerificationAbort(consumer, std::move(rep));
}

Dataset stage_generate(const PipelineLayout& L, const GenConfig& gen, double train_fraction) {
  Dataset ds = generate(gen);
  DirectoryObjectStore store(L.objects());
  for (const auto& s : ds.samples) {
    store.put(s.raw);
    store.put(write_feature_file(s.grid));
  }
  write_manifest(L, ds.raw_manifest);
  write_manifest(L, ds.annotation_manifest);
  write_manifest(L, ds.features_manifest);
  write_manifest(L, stratified_split(ds.features_manifest, train_fraction, gen.seed).manifest);
  return ds;
}

Digest stage_commit(const PipelineLayout& L) {
  const StageManifest m = read_manifest(L, Stage::features);
  const Digest root = build_tree(m.samples).root();
  if (root != *m.root)
    throw MerkleError("features manifest commits " + to_hex(*m.root) + " but its records hash to " + to_hex(root));
  record_root(L.roots_log(), Stage::features, root);
  return root;
}

FlipLog stage_attack(const PipelineLayout& L, const AttackConfig& cfg) {
  const StageManifest splits = read_manifest(L, Stage::splits);
  StageManifest annotation = read_manifest(L, Stage::annotation);
  StageManifest features = read_manifest(L, Stage::features);
  DirectoryObjectStore store(L.objects());
  FlipLog log;
  if (cfg.kind == AttackKind::label_flip) {
    auto res = flip_labels(annotation, splits, cfg);
    log = res.log;
    annotation = std::move(res.manifest);
    // The adversary keeps the downstream manifest consistent with the rewritten labels.
    features = flip_labels(features, splits, cfg).manifest;
  } else {
    const FeatureLookup lookup = [&](const SampleRecord& r) { return load_grid(store, r.h_feat); };
    auto res = backdoor_attack(features, lookup, splits, cfg);
    for (const auto& [id, g] : res.modified) store.put(write_feature_file(g));
    features = std::move(res.manifest);
    log = res.log;
  }
  write_manifest(L, annotation);
  write_manifest(L, features);
  write_file_atomic(L.flip_log(), serialize_flip_log(log));
  return log;
}

TrainOutcome stage_train(const PipelineLayout& L, const std::vector<std::string>& classes, const TrainConfig& cfg,
                         bool verify) {
  if (verify) verify_before_consume(L, Stage::splits, Stage::model);
  const StageManifest features = read_manifest(L, Stage::features);
  const StageManifest splits = read_manifest(L, Stage::splits);
  const auto parts = partitions_of(splits);
  DirectoryObjectStore store(L.objects());
  Examples data;
  std::uint16_t rows = 0, cols = 0;
  for (const auto& r : features.samples) {
    auto it = parts.find(r.id);
    if (it == parts.end()) throw ManifestError("sample '" + r.id + "' has no split assignment");
    if (it->second != Partition::train) continue;
    FeatureGrid g = load_grid(store, r.h_feat);
    rows = g.rows;
    cols = g.cols;
    data.add(g, index_of(classes, r.label));
  }
  TrainOutcome out;
  out.model = train(data, rows, cols, classes, cfg);
  out.checkpoint = store.put(serialize_checkpoint(out.model));

  StageManifest model;
  model.stage = Stage::model;
  model.prev = sha256(read_file(L.manifest(Stage::splits)));
  model.root = features.root;
  model.artifacts.push_back({"checkpoint", out.checkpoint});
  write_manifest(L, model);
  return out;
}

MetricsReport stage_eval(const PipelineLayout& L, const AttackConfig& attack) {
  const StageManifest model_manifest = read_manifest(L, Stage::model);
  const StageManifest features = read_manifest(L, Stage::features);
  const StageManifest splits = read_manifest(L, Stage::splits);
  DirectoryObjectStore store(L.objects());
  auto ck = std::find_if(model_manifest.artifacts.begin(), model_manifest.artifacts.end(),
                         [](const ArtifactRecord& a) { return a.id == "checkpoint"; });
  if (ck == model_manifest.artifacts.end()) throw ManifestError("model manifest lists no checkpoint");
  const ModelParams model = parse_checkpoint(store.get(ck->digest));
  const auto& classes = model.class_order;
  const int source = index_of(classes, attack.source);
  const int target = index_of(classes, attack.target);

  const auto parts = partitions_of(splits);
  Examples test;
  for (const auto& r : features.samples)
    if (parts.at(r.id) == Partition::test) test.add(load_grid(store, r.h_feat), index_of(classes, r.label));
  const auto preds = predict_all(model, test);
  MetricsReport m = evaluate(test.y, preds, classes);
  std::size_t src = 0;
  for (int y : test.y) src += y == source;
  m.beta_test = static_cast<double>(src) / static_cast<double>(test.size());
  if (src > 0) m.asr_clean = attack_success_rate(preds, test.y, source, target);

  const FeatureLookup lookup = [&](const SampleRecord& r) { return load_grid(store, r.h_feat); };
  const auto stamped = stamp_test_set(features, lookup, splits, attack.source, attack);
  Examples trig;
  fs::create_directories(L.eval_dir());
  for (const auto& [id, g] : stamped) {
    write_file_atomic(L.eval_dir() / (id + ".fgrd"), write_feature_file(g));
    trig.add(g, source);
  }
  if (trig.size() > 0) m.asr_triggered = attack_success_rate(predict_all(model, trig), trig.y, source, target);
  write_file_atomic(L.metrics(), metrics_tsv(m));
  return m;
}

RunRecord run_pipeline(const RunOptions& opts) {
  const PipelineLayout L(opts.out);
  RunRecord rec;
  auto clock = std::chrono::steady_clock::now();
  auto lap = [&](const char* name) {
    const auto now = std::chrono::steady_clock::now();
    rec.timings.emplace_back(name, std::chrono::duration<double>(now - clock).count());
    clock = now;
  };
  auto signed_stage = [&](const StageManifest& m) {
    write_manifest(L, m);
    sign_stage(L, m.stage);
    rec.manifest_hashes[m.stage] = sha256(read_file(L.manifest(m.stage)));
  };

  for (Role r : kAllRoles) ensure_keypair(L, r, opts.scheme);
  lap("keys");

  try {
    Dataset ds = generate(opts.gen);
    DirectoryObjectStore store(L.objects());
    for (const auto& s : ds.samples) store.put(s.raw);
    signed_stage(ds.raw_manifest);
    lap("raw");

    verify_before_consume(L, Stage::raw, Stage::annotation);
    signed_stage(ds.annotation_manifest);
    lap("annotation");

    verify_before_consume(L, Stage::annotation, Stage::features);
    for (const auto& s : ds.samples) store.put(write_feature_file(s.grid));
    write_manifest(L, ds.features_manifest);
    stage_commit(L);
    sign_stage(L, Stage::features);
    rec.manifest_hashes[Stage::features] = sha256(read_file(L.manifest(Stage::features)));
    lap("features");

    verify_before_consume(L, Stage::features, Stage::splits);
    signed_stage(stratified_split(ds.features_manifest, opts.train_fraction, opts.gen.seed).manifest);
    lap("splits");

    if (opts.attack) {
      rec.flips = stage_attack(L, *opts.attack);
      lap("attack");
    }

    stage_train(L, ds.classes, opts.train, opts.verify);
    sign_stage(L, Stage::model);
    rec.manifest_hashes[Stage::model] = sha256(read_file(L.manifest(Stage::model)));
    lap("train");

    rec.metrics = stage_eval(L, opts.attack.value_or(AttackConfig{}));
    lap("eval");
    rec.completed = true;
    rec.chain = verify_chain(L.root);
  } catch (const VerificationAbort& e) {
    rec.chain = e.report();
    rec.caught_at = e.report().first()->stage;
    rec.merkle_abort = e.report().merkle_mismatch();
    rec.abort_message = abort_text(e.report());
    rec.exit_code = 2;
  }
  write_file_atomic(L.run_record(), run_record_tsv(rec));
  return rec;
}

std::string run_record_tsv(const RunRecord& r) {
  std::string out;
  out += std::string("completed\t") + (r.completed ? "yes" : "no") + "\n";
  out += "caught_at\t" + (r.caught_at ? std::string(stage_name(*r.caught_at)) : std::string("-")) + "\n";
  out += std::string("merkle_abort\t") + (r.merkle_abort ? "yes" : "no") + "\n";
  out += "exit_code\t" + std::to_string(r.exit_code) + "\n";
  if (r.flips) out += "flipped\t" + std::to_string(r.flips->entries.size()) + "\n";
  for (const auto& [s, d] : r.manifest_hashes) out += "manifest\t" + std::string(stage_name(s)) + "\t" + to_hex(d) + "\n";
  if (r.metrics) {
    out += "accuracy\t" + fixed(r.metrics->overall_accuracy) + "\n";
    if (r.metrics->asr_clean) out += "asr_clean\t" + fixed(*r.metrics->asr_clean) + "\n";
    if (r.metrics->asr_triggered) out += "asr_triggered\t" + fixed(*r.metrics->asr_triggered) + "\n";
  }
  for (const auto& [name, secs] : r.timings) out += "seconds\t" + name + "\t" + fixed(secs, 3) + "\n";
  return out;
}

}  // namespace pbench
