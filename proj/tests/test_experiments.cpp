#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>

#include "pbench/chain.hpp"
#include "pbench/config.hpp"
#include "pbench/experiment.hpp"
#include "pbench/merkle.hpp"
#include "pbench/pipeline.hpp"

using namespace pbench;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pbench-exp-" + std::to_string(std::random_device{}()));
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

// A reduced dataset so end-to-end runs take a fraction of a second.
const char* kSmallConfig =
    "count.Car = 900\ncount.Tram = 120\ncount.Truck = 100\ncount.Bus = 80\ncount.Motorcycle = 80\n"
    "count.Bicycle = 80\nepochs = 8\nhidden = 16\n";

fs::path small_config(const TempDir& dir) {
  const auto p = dir.path / "small.conf";
  write_file_atomic(p, std::string_view(kSmallConfig));
  return p;
}

ExperimentPlan small_plan() {
  ExperimentPlan plan = plan_from(Config::parse(kSmallConfig));
  plan.rates = {0.0, 0.005, 0.02};
  plan.seeds = {1, 2};
  return plan;
}

CellRecord cell(AttackKind kind, double rate, std::uint64_t seed, double acc, double asr) {
  CellRecord c;
  c.kind = kind;
  c.rate = rate;
  c.seed = seed;
  c.flipped = static_cast<std::size_t>(rate * 9690);
  c.requested = c.flipped;
  c.eligible = 182;
  c.accuracy = acc;
  c.asr = asr;
  if (kind == AttackKind::backdoor_patch) c.asr_triggered = asr;
  c.beta_test = 78.0 / 2907.0;
  return c;
}

}  // namespace

TEST_CASE("report rendering") {
  SUBCASE("empty set gives header-only outputs") {
    const auto r = report_render({});
    CHECK(r.machine_cells.find('\n') == r.machine_cells.size() - 1);
    CHECK(r.machine_summary.find('\n') == r.machine_summary.size() - 1);
    CHECK(r.human.find("Rate | Flipped | Accuracy | ASR (95% CI)") != std::string::npos);
  }
  SUBCASE("single clean run gives one row") {
    const auto r = report_render({cell(AttackKind::label_flip, 0.0, 1, 0.98, 0.02)});
    const auto table = label_flip_table(summarize({cell(AttackKind::label_flip, 0.0, 1, 0.98, 0.02)}));
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK(std::count(r.machine_cells.begin(), r.machine_cells.end(), '\n') == 2);
  }
  SUBCASE("full sweep layout") {
    std::vector<CellRecord> cells;
    for (auto kind : {AttackKind::label_flip, AttackKind::backdoor_patch})
      for (double rate : {0.0, 0.005, 0.01, 0.02})
        for (std::uint64_t seed : {1, 2, 3}) cells.push_back(cell(kind, rate, seed, 0.97, 0.9 + 0.03 * seed));
    const auto rows = summarize(cells);
    CHECK(rows.size() == 8);
    const auto flip = label_flip_table(rows);
    CHECK(std::count(flip.begin(), flip.end(), '\n') == 6);
    CHECK(flip.find("0.5%") != std::string::npos);
    CHECK(flip.find(" 48 ") != std::string::npos);
    const auto bd = backdoor_table(rows);
    CHECK(bd.find("Triggered ASR") != std::string::npos);
    CHECK(bd.find("Overall accuracy") != std::string::npos);
    const auto r = report_render(cells);
    CHECK(parse_cells_tsv(r.machine_cells).size() == cells.size());
    CHECK(cells_tsv(parse_cells_tsv(r.machine_cells)) == r.machine_cells);
    CHECK(report_render(cells).machine_summary == r.machine_summary);
  }
  SUBCASE("failed cells are marked") {
    auto bad = cell(AttackKind::label_flip, 0.01, 1, 0, 0);
    bad.failed = true;
    bad.error = "training diverged";
    const auto r = report_render({cell(AttackKind::label_flip, 0.01, 2, 0.97, 0.9), bad});
    CHECK(r.machine_cells.find("failed:training diverged") != std::string::npos);
    CHECK(r.human.find("1 failed") != std::string::npos);
  }
}

TEST_CASE("plan config") {
  const auto plan = plan_from(Config::parse("rates = 0, 0.01\nseeds = 4\nkinds = backdoor_patch\n"));
  CHECK(plan.rates == std::vector<double>{0.0, 0.01});
  CHECK(plan.seeds == std::vector<std::uint64_t>{4});
  CHECK(plan.kinds == std::vector<AttackKind>{AttackKind::backdoor_patch});
  CHECK_THROWS(plan_from(Config::parse("rates = 1.5\n")));
  CHECK_THROWS(plan_from(Config::parse("seeds = \n")));
  const ExperimentPlan defaults;
  CHECK(defaults.rates == std::vector<double>{0.0, 0.005, 0.01, 0.02});
  CHECK(defaults.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("small sweep is deterministic and ordered") {
  const auto plan = small_plan();
  const auto a = run_sweep(plan);
  CHECK(a.size() == 2 * 3 * 2);
  CHECK(a.front().kind == AttackKind::label_flip);
  CHECK(a.back().kind == AttackKind::backdoor_patch);
  for (const auto& c : a) {
    CHECK_FALSE(c.failed);
    if (c.rate == 0.0) CHECK(c.flipped == 0);
    if (c.rate == 0.005) CHECK(c.flipped == 6);
  }
  // The clean cell is shared across attack kinds.
  CHECK(a[0].accuracy == a[6].accuracy);
  const auto b = run_sweep(plan);
  CHECK(cells_tsv(a) == cells_tsv(b));
  CHECK(report_render(a).machine_summary == report_render(b).machine_summary);
}

TEST_CASE("a failing cell does not stop the sweep") {
  auto plan = small_plan();
  plan.rates = {0.0, 0.02};
  plan.seeds = {1};
  plan.kinds = {AttackKind::label_flip};
  plan.train.learning_rate = 1e30;
  plan.train.weight_decay = 0;
  const auto cells = run_sweep(plan);
  REQUIRE(cells.size() == 2);
  for (const auto& c : cells) {
    CHECK(c.failed);
    CHECK(c.error.find("epoch") != std::string::npos);
  }
}

TEST_CASE("pipeline modes") {
  TempDir dir;
  RunOptions opts;
  const auto conf = Config::parse(kSmallConfig);
  opts.gen = gen_config_from(conf);
  opts.train = train_config_from(conf);
  opts.scheme = "Ed25519";

  opts.out = dir.path / "clean";
  const auto clean = run_pipeline(opts);
  CHECK(clean.completed);
  CHECK(clean.exit_code == 0);
  CHECK(clean.chain.passed());
  CHECK(clean.manifest_hashes.size() == 5);
  CHECK(verify_chain(opts.out).passed());

  AttackConfig flip;
  flip.rate = 0.02;
  opts.attack = flip;
  opts.out = dir.path / "caught";
  const auto caught = run_pipeline(opts);
  CHECK_FALSE(caught.completed);
  CHECK(caught.exit_code == 2);
  REQUIRE(caught.caught_at.has_value());
  CHECK(*caught.caught_at == Stage::annotation);
  CHECK(caught.merkle_abort);
  CHECK(caught.abort_message.rfind("\xE2\x9C\x97 annotation: signature", 0) == 0);
  CHECK(caught.abort_message.find(std::string(kMerkleAbortLine)) != std::string::npos);

  opts.verify = false;
  opts.out = dir.path / "open";
  const auto open = run_pipeline(opts);
  CHECK(open.completed);
  REQUIRE(open.metrics.has_value());
  CHECK(open.metrics->asr_clean.has_value());
  CHECK(open.flips->entries.size() == 27);
}

TEST_CASE("cli end to end") {
  TempDir dir;
  const auto conf = small_config(dir).string();
  const std::string base = "--config '" + conf + "' ";

  auto clean = cli(dir.path, base + "--out clean run --scheme Ed25519");
  CHECK(clean.code == 0);
  auto vc = cli(dir.path, "verify-chain clean");
  CHECK(vc.code == 0);
  CHECK(vc.out.find("chain verified: 5 stages") != std::string::npos);

  auto caught = cli(dir.path, base + "--out caught run --scheme Ed25519 --attack label_flip --rate 0.02");
  CHECK(caught.code == 2);
  CHECK(caught.err.find("annotation") != std::string::npos);
  CHECK(caught.err.find(std::string(kMerkleAbortLine)) != std::string::npos);

  auto open = cli(dir.path, base + "--out open --no-verify run --scheme Ed25519 --attack backdoor_patch --rate 0.02");
  CHECK(open.code == 0);
  CHECK(open.err.find("VERIFICATION DISABLED") != std::string::npos);
  CHECK(open.out.find("triggered ASR") != std::string::npos);

  SUBCASE("byte mutation after signing aborts verify-chain") {
    const PipelineLayout L(dir.path / "clean");
    auto text = read_text_file(L.manifest(Stage::splits));
    text[text.find('\n', text.find('\n') + 1) + 3] ^= 1;
    write_file_atomic(L.manifest(Stage::splits), std::string_view(text));
    auto r = cli(dir.path, "verify-chain clean");
    CHECK(r.code == 2);
    CHECK(r.err.find("splits: signature") != std::string::npos);
  }
  SUBCASE("detect compares two runs") {
    auto d = cli(dir.path, "detect --baseline clean --current open");
    CHECK(d.code == 0);
    CHECK(d.out.find("Control                  | Triggered") != std::string::npos);
  }
  SUBCASE("usage and config errors exit 1") {
    CHECK(cli(dir.path, "--out x").code == 1);
    CHECK(cli(dir.path, "--out x frobnicate").code == 1);
    CHECK(cli(dir.path, "--config missing.conf --out x gen").code == 1);
    write_file_atomic(dir.path / "bad.conf", std::string_view("noise_sigma = lots\n"));
    CHECK(cli(dir.path, "--config bad.conf --out x gen").code == 1);
    CHECK(cli(dir.path, "verify-chain nowhere").code == 2);
  }
}

TEST_CASE("cli stage by stage") {
  TempDir dir;
  const std::string base = "--config '" + small_config(dir).string() + "' --out s ";
  CHECK(cli(dir.path, base + "gen").code == 0);
  CHECK(cli(dir.path, base + "keygen --all --scheme Ed25519").code == 0);
  for (const char* st : {"raw", "annotation", "features", "splits"})
    CHECK(cli(dir.path, base + "sign --stage " + st).code == 0);
  const auto commit = cli(dir.path, base + "commit --prove clip-00007");
  CHECK(commit.code == 0);
  const PipelineLayout L(dir.path / "s");
  const auto proof_text = read_text_file(dir.path / "s" / "proofs" / "clip-00007.proof");
  const auto features = read_manifest(L, Stage::features);
  const auto proof = parse_proof(proof_text, *features.root);
  CHECK(verify_inclusion(features.samples[proof.index], proof));
  CHECK(features.samples[proof.index].id == "clip-00007");

  // An attack after signing is caught by the trainer.
  CHECK(cli(dir.path, base + "attack --kind label_flip --rate 0.02").code == 0);
  CHECK(fs::exists(dir.path / "s" / "fliplog.tsv"));
  const auto train = cli(dir.path, base + "train");
  CHECK(train.code == 2);
  CHECK(train.err.find(std::string(kMerkleAbortLine)) != std::string::npos);
}
