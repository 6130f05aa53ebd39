#include "pbench/experiment.hpp"

#include <boost/algorithm/string.hpp>

#include <chrono>
#include <map>
#include <set>

namespace pbench {

namespace {

std::map<std::string, Partition> partitions(const SplitResult& split) {
  std::map<std::string, Partition> out;
  for (const auto& r : split.assignments) out[r.id] = r.partition;
  return out;
}

}  // namespace

PreparedData prepare_data(const GenConfig& gen, double train_fraction, std::uint64_t seed, const AttackConfig& attack) {
  GenConfig g = gen;
  g.seed = seed;
  PreparedData p;
  p.data = generate(g);
  p.split = stratified_split(p.data.features_manifest, train_fraction, seed);
  p.source = p.data.class_index(attack.source);
  p.target = p.data.class_index(attack.target);
  const auto parts = partitions(p.split);
  for (const auto& s : p.data.samples) {
    if (parts.at(s.id) != Partition::test) continue;
    p.test.add(s.grid, p.data.class_index(s.label));
    p.test_ids.push_back(s.id);
    if (s.label == attack.source) p.triggered.add(stamp_patch(s.grid, attack), p.source);
  }
  return p;
}

CellOutcome run_cell(const PreparedData& prep, const TrainConfig& train_cfg, const std::optional<AttackConfig>& attack,
                     const MetricsReport* baseline) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset& ds = prep.data;
  CellOutcome out;
  out.poisoned = ds.features_manifest;
  if (attack) {
    out.record.kind = attack->kind;
    out.record.rate = attack->rate;
    out.record.seed = attack->seed;
    const FeatureLookup lookup = [&](const SampleRecord& r) { return ds.by_id(r.id).grid; };
    if (attack->kind == AttackKind::label_flip) {
      auto res = flip_labels(ds.features_manifest, prep.split.manifest, *attack);
      out.poisoned = std::move(res.manifest);
      out.log = std::move(res.log);
    } else {
      auto res = backdoor_attack(ds.features_manifest, lookup, prep.split.manifest, *attack);
      out.poisoned = std::move(res.manifest);
      out.log = std::move(res.log);
      out.patched = std::move(res.modified);
    }
    out.record.flipped = out.log->entries.size();
    out.record.requested = out.log->requested;
    out.record.eligible = out.log->eligible;
  }

  const auto parts = partitions(prep.split);
  std::map<std::string, const FeatureGrid*> patched;
  for (const auto& [id, g] : out.patched) patched[id] = &g;
  Examples train_set;
  for (const auto& r : out.poisoned.samples) {
    if (parts.at(r.id) != Partition::train) continue;
    auto it = patched.find(r.id);
    train_set.add(it != patched.end() ? *it->second : ds.by_id(r.id).grid, ds.class_index(r.label));
  }
  const auto& first = ds.samples.front().grid;
  out.model = train(train_set, first.rows, first.cols, ds.classes, train_cfg);

  out.predictions = predict_all(out.model, prep.test);
  out.metrics = evaluate(prep.test.y, out.predictions, ds.classes);
  out.metrics.asr_clean = attack_success_rate(out.predictions, prep.test.y, prep.source, prep.target);
  if (prep.triggered.size() > 0) {
    const auto trig = predict_all(out.model, prep.triggered);
    out.metrics.asr_triggered = attack_success_rate(trig, prep.triggered.y, prep.source, prep.target);
  }
  std::size_t src = 0;
  for (int y : prep.test.y) src += y == prep.source;
  out.metrics.beta_test = static_cast<double>(src) / static_cast<double>(prep.test.size());
  if (baseline) out.metrics.delta_acc = baseline->overall_accuracy - out.metrics.overall_accuracy;

  out.record.accuracy = out.metrics.overall_accuracy;
  out.record.asr = out.metrics.asr_clean;
  out.record.asr_triggered = out.metrics.asr_triggered;
  out.record.beta_test = *out.metrics.beta_test;
  out.record.delta_acc = out.metrics.delta_acc.value_or(0.0);
  out.record.source_recall = out.metrics.per_class[static_cast<std::size_t>(prep.source)].recall;
  out.record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw ConfigError("a plan needs at least one seed");
  if (kinds.empty()) throw ConfigError("a plan needs at least one attack kind");
  for (double r : rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("rates must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  train.validate();
  attack.validate();
}

TrainConfig train_config_from(const Config& file) {
  TrainConfig t;
  t.hidden = static_cast<std::size_t>(file.get_int("hidden", static_cast<long long>(t.hidden)));
  t.epochs = static_cast<std::size_t>(file.get_int("epochs", static_cast<long long>(t.epochs)));
  t.learning_rate = file.get_double("learning_rate", t.learning_rate);
  t.batch_size = static_cast<std::size_t>(file.get_int("batch_size", static_cast<long long>(t.batch_size)));
  t.weight_decay = file.get_double("weight_decay", t.weight_decay);
  t.seed = file.get_u64("seed", t.seed);
  t.validate();
  return t;
}

AttackConfig attack_config_from(const Config& file) {
  AttackConfig a;
  a.source = file.get_string("source", a.source);
  a.target = file.get_string("target", a.target);
  const bool has_rows = file.get("patch_rows").has_value();
  if (has_rows != file.get("patch_cols").has_value()) throw AttackError("patch_rows and patch_cols go together");
  if (has_rows) {
    const auto side = [&](const char* key) {
      const long long v = file.get_int(key, 0);
      if (v < 0 || v > 65535) throw AttackError(std::string(key) + " must be in [0, 65535]");
      return static_cast<std::uint16_t>(v);
    };
    a.patch = {{side("patch_rows"), side("patch_cols")}};
  }
  a.patch_value = static_cast<float>(file.get_double("patch_value", a.patch_value));
  a.rate = file.get_double("rate", a.rate);
  a.seed = file.get_u64("seed", a.seed);
  if (auto k = file.get("kind")) a.kind = parse_attack_kind(*k);
  a.validate();
  return a;
}

ExperimentPlan plan_from(const Config& file) {
  ExperimentPlan plan;
  plan.gen = gen_config_from(file);
  plan.train = train_config_from(file);
  plan.attack = attack_config_from(file);
  plan.rates = file.get_double_list("rates", plan.rates);
  plan.seeds = file.get_u64_list("seeds", plan.seeds);
  plan.train_fraction = file.get_double("train_fraction", plan.train_fraction);
  if (auto k = file.get("kinds")) {
    std::vector<std::string> names;
    boost::split(names, *k, boost::is_any_of(","));
    plan.kinds.clear();
    for (auto& n : names) {
      boost::trim(n);
      if (!n.empty()) plan.kinds.push_back(parse_attack_kind(n));
    }
  }
  plan.validate();
  return plan;
}

std::vector<CellRecord> run_sweep(const ExperimentPlan& plan, const Progress& progress) {
  plan.validate();
  std::vector<double> rates = plan.rates;
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

  // cells[kind][rate][seed] in plan order.
  std::map<std::pair<int, double>, std::vector<CellRecord>> grid;
  for (std::uint64_t seed : plan.seeds) {
    AttackConfig base = plan.attack;
    base.seed = seed;
    std::optional<PreparedData> prep;
    std::optional<CellOutcome> clean;
    std::string setup_error;
    try {
      prep = prepare_data(plan.gen, plan.train_fraction, seed, base);
      TrainConfig tc = plan.train;
      tc.seed = seed;
      clean = run_cell(*prep, tc, std::nullopt);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (AttackKind kind : plan.kinds) {
      for (double rate : rates) {
        CellRecord rec;
        rec.kind = kind;
        rec.rate = rate;
        rec.seed = seed;
        if (!clean) {
          rec.failed = true;
          rec.error = setup_error;
        } else if (rate == 0.0) {
          rec = clean->record;
          rec.kind = kind;
          rec.rate = 0.0;
          rec.seed = seed;
        } else {
          try {
            AttackConfig a = base;
            a.kind = kind;
            a.rate = rate;
            TrainConfig tc = plan.train;
            tc.seed = seed;
            rec = run_cell(*prep, tc, a, &clean->metrics).record;
          } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
          }
        }
        if (progress) progress(rec);
        grid[{static_cast<int>(kind), rate}].push_back(rec);
      }
    }
  }
  std::vector<CellRecord> cells;
  for (AttackKind kind : plan.kinds)
    for (double rate : rates)
      for (auto& c : grid[{static_cast<int>(kind), rate}]) cells.push_back(c);
  return cells;
}

}  // namespace pbench
