#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "pwrules/chemgraph.hpp"
#include "pwrules/cli.hpp"
#include "pwrules/formats.hpp"
#include "pwrules/util.hpp"
#include "support/planted.hpp"

using namespace pwrules;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kFixtures = PWRULES_FIXTURE_DIR;

std::string scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "pwrules_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

}  // namespace

TEST_CASE("cli exit codes and dry-run") {
  std::string dir = scratch_dir("exit_codes");

  // missing input path -> exit 2, no output written
  int rc = cli::run({"fragments", "build", "--molecules", dir + "/nope.tsv", "--out",
                     dir + "/out.jsonl"});
  CHECK(rc == 2);
  CHECK_FALSE(fs::exists(dir + "/out.jsonl"));

  // usage error -> exit 2
  CHECK(cli::run({"fragments", "build"}) == 2);
  CHECK(cli::run({"no-such-command"}) == 2);

  // dry run validates without writing
  write_text(dir + "/mols.tsv", "m1\tc1ccccc1CC\n");
  rc = cli::run({"--dry-run", "fragments", "build", "--molecules", dir + "/mols.tsv", "--out",
                 dir + "/out.jsonl"});
  CHECK(rc == 0);
  CHECK_FALSE(fs::exists(dir + "/out.jsonl"));

  // domain error (nothing survives filtering) -> exit 1
  write_text(dir + "/tiny.tsv", "m1\tCC\n");
  rc = cli::run({"fragments", "build", "--molecules", dir + "/tiny.tsv", "--out",
                 dir + "/out2.jsonl"});
  CHECK(rc == 1);
  CHECK_FALSE(fs::exists(dir + "/out2.jsonl"));
}

TEST_CASE("cli fragments build is byte-identical across runs") {
  std::string dir = scratch_dir("determinism");
  write_text(dir + "/mols.tsv",
             "m1\tc1ccccc1Cc1ccccc1\nm2\tc1ccccc1CC1CCOCC1\nm3\tC1CCOCC1CC\n# comment\n");
  std::string out = dir + "/frags.jsonl";
  REQUIRE(cli::run({"--seed", "3", "fragments", "build", "--molecules", dir + "/mols.tsv",
                    "--out", out, "--min-freq", "0"}) == 0);
  uint64_t h1 = file_hash(out);
  REQUIRE(cli::run({"--seed", "3", "fragments", "build", "--molecules", dir + "/mols.tsv",
                    "--out", out, "--min-freq", "0"}) == 0);
  CHECK(file_hash(out) == h1);

  // output header carries the config fingerprint
  std::string content = read_file(out);
  CHECK(content.rfind("# config_hash=", 0) == 0);

  // round-trips through the reader
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(out);
  CHECK(lib.fragments.size() > 0);
}

TEST_CASE("cli reads key=value config files") {
  std::string dir = scratch_dir("config");
  write_text(dir + "/mols.tsv", "m1\tc1ccccc1Cc1ccccc1\nm2\tc1ccccc1CC1CCOCC1\n");
  write_text(dir + "/run.cfg",
             "[fragments.build]\nmolecules=\"" + dir + "/mols.tsv\"\nout=\"" + dir +
                 "/frags.jsonl\"\nmin-freq=0\n");
  REQUIRE(cli::run({"--config", dir + "/run.cfg", "fragments", "build"}) == 0);
  CHECK(fs::exists(dir + "/frags.jsonl"));

  // a flag overrides the config value
  REQUIRE(cli::run({"--config", dir + "/run.cfg", "fragments", "build", "--out",
                    dir + "/other.jsonl"}) == 0);
  CHECK(fs::exists(dir + "/other.jsonl"));
}

TEST_CASE("cli fragments build rule-of-three report with descriptor provider") {
  std::string dir = scratch_dir("ro3");
  write_text(dir + "/mols.tsv", "m1\tc1ccccc1Cc1ccccc1\nm2\tc1ccccc1CC1CCOCC1\n");
  frag::FragmentLibrary probe;  // build once to learn the benzene key
  REQUIRE(cli::run({"fragments", "build", "--molecules", dir + "/mols.tsv", "--out",
                    dir + "/frags.jsonl", "--min-freq", "0"}) == 0);
  probe = formats::read_fragments_jsonl(dir + "/frags.jsonl");
  std::string benzene_key = chem::canonical_key(chem::parse_smiles("c1ccccc1"));
  REQUIRE(probe.by_key(benzene_key) != nullptr);

  // provider pushes benzene over the LogP limit; others stay absent (passing)
  write_text(dir + "/prov.tsv", benzene_key + "\t4.5\t10.0\n");
  REQUIRE(cli::run({"fragments", "build", "--molecules", dir + "/mols.tsv", "--out",
                    dir + "/frags.jsonl", "--min-freq", "0", "--descriptors", dir + "/prov.tsv",
                    "--ro3-out", dir + "/ro3.json"}) == 0);
  json ro3 = json::parse(read_file(dir + "/ro3.json"));
  CHECK(ro3["n_fragments"].get<long>() == static_cast<long>(probe.fragments.size()));
  CHECK(ro3["n_pass"].get<long>() == static_cast<long>(probe.fragments.size()) - 1);
}

TEST_CASE("checkpoint round trip preserves predictions to f32 precision") {
  std::string dir = scratch_dir("pwck");
  model::ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.ff_dim = 16;
  cfg.n_fragments = 3;
  cfg.max_words = 8;
  cfg.dropout = 0.0;
  cfg.seed = 99;
  model::ModelState state = model::init_model(cfg);
  Rng rng(5);
  std::vector<std::vector<double>> words(3, std::vector<double>(8));
  for (auto& w : words)
    for (double& v : w) v = rng.uniform(-1, 1);
  auto before = model::predict(state, words);

  formats::write_checkpoint(dir + "/m.pwck", state, 0xabcdull);
  uint64_t hash = 0;
  model::ModelState loaded = formats::read_checkpoint(dir + "/m.pwck", &hash);
  CHECK(hash == 0xabcdull);
  CHECK(loaded.cfg.embed_dim == cfg.embed_dim);
  CHECK(loaded.cfg.n_fragments == cfg.n_fragments);
  auto after = model::predict(loaded, words);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-5));  // f32 storage

  // attention and embedding containers round-trip exactly at f32 values
  std::vector<std::vector<double>> m{{0.0f, 0.25f}, {0.5f, 1.0f}};
  formats::write_pwat(dir + "/a.pwat", m);
  CHECK(formats::read_pwat(dir + "/a.pwat") == m);
  formats::write_pweb(dir + "/e.pweb", m);
  CHECK(formats::read_pweb(dir + "/e.pweb") == m);
}

TEST_CASE("cli screen metrics on the EF1% fixture") {
  std::string dir = scratch_dir("metrics");
  // 1000 compounds; 50 actives; exactly 5 actives in the top 10
  std::string ranking, actives;
  for (int i = 0; i < 1000; ++i) {
    char row[64];
    std::snprintf(row, sizeof row, "%d\tm%04d\t%.4f\n", i + 1, i, 1000.0 - i);
    ranking += row;
  }
  for (int i = 0; i < 5; ++i) actives += "m000" + std::to_string(i) + "\n";
  for (int i = 100; i < 145; ++i) actives += "m0" + std::to_string(i) + "\n";
  write_text(dir + "/screen.tsv", ranking);
  write_text(dir + "/actives.txt", actives);

  REQUIRE(cli::run({"screen", "metrics", "--ranking", dir + "/screen.tsv", "--actives",
                    dir + "/actives.txt", "--out", dir + "/metrics.json"}) == 0);
  json m = json::parse(read_file(dir + "/metrics.json"));
  CHECK(m["ef"]["ef_1pct"].get<double>() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(m["n_actives"].get<long>() == 50);
  CHECK(m["n_total"].get<long>() == 1000);
  CHECK(m["auc"].get<double>() > 0.5);
}

TEST_CASE("cli screen fuse") {
  std::string dir = scratch_dir("fuse");
  write_text(dir + "/a.tsv", "m1\t3.0\nm2\t2.0\nm3\t1.0\n");
  write_text(dir + "/b.tsv", "m1\t10.0\nm2\t20.0\nm3\t30.0\n");  // lower = better

  REQUIRE(cli::run({"screen", "fuse", "--a", dir + "/a.tsv", "--b", dir + "/b.tsv",
                    "--orientation-b", "lower", "--out", dir + "/fused.tsv"}) == 0);
  std::vector<std::string> order;
  for_each_data_line(dir + "/fused.tsv", [&](const std::string& line, size_t) {
    order.push_back(split(line, '\t')[1]);
  });
  CHECK(order == std::vector<std::string>{"m1", "m2", "m3"});

  // mismatched ids -> domain error
  write_text(dir + "/c.tsv", "mX\t1.0\nm2\t2.0\nm3\t3.0\n");
  CHECK(cli::run({"screen", "fuse", "--a", dir + "/a.tsv", "--b", dir + "/c.tsv", "--out",
                  dir + "/nope.tsv"}) == 1);
}

TEST_CASE("cli structval run on the 6dh0 fixture") {
  std::string dir = scratch_dir("structval");
  REQUIRE(cli::run({"--seed", "5", "structval", "run", "--manifest",
                    kFixtures + "/6dh0_manifest.tsv", "--rules", kFixtures + "/6dh0_rules.jsonl",
                    "--fragments", kFixtures + "/6dh0_fragments.jsonl", "--out-distances",
                    dir + "/dist.tsv", "--out-stats", dir + "/stats.json"}) == 0);

  // the DTGAD x frag_2565 rule row reproduces the pinned distance
  bool found = false;
  for_each_data_line(dir + "/dist.tsv", [&](const std::string& line, size_t) {
    auto cols = split(line, '\t');
    if (cols[0] == "word") return;  // header row
    if (cols[0] == "DTGAD" && cols[1] == "frag_2565" && cols[3] == "rule") {
      found = true;
      CHECK(std::stod(cols[2]) == doctest::Approx(5.63).epsilon(0.05 / 5.63));
    }
  });
  CHECK(found);

  json stats = json::parse(read_file(dir + "/stats.json"));
  CHECK(stats["n_rule_pairs"].get<long>() == 2);
  CHECK(stats["n_random_pairs"].get<long>() == 2);  // equal-sized control by default
  CHECK(stats.contains("p_two_sided"));
  CHECK(stats["median_rule"].get<double>() > 0.0);
}

TEST_CASE("cli pipeline contract on a small planted corpus") {
  std::string dir = scratch_dir("pipeline");
  testsupport::PlantedConfig pcfg;
  pcfg.n_proteins = 20;
  pcfg.n_train_actives = 40;
  pcfg.n_train_decoys = 40;
  pcfg.pairs_per_protein = 16;
  pcfg.n_screen_actives = 5;
  pcfg.n_screen_decoys = 40;
  pcfg.seed = 11;
  auto ds = testsupport::generate_planted(dir + "/data", pcfg);

  auto run_ok = [&](std::vector<std::string> args) {
    INFO("command ", args[0], " ", args.size() > 1 ? args[1] : "");
    REQUIRE(cli::run(args) == 0);
  };

  run_ok({"--seed", "11", "fragments", "build", "--molecules", ds.train_molecules_tsv, "--out",
          dir + "/fragments.jsonl"});
  run_ok({"--seed", "11", "fragments", "coverage", "--library", dir + "/fragments.jsonl",
          "--probe", ds.screen_molecules_tsv, "--out", dir + "/coverage.json"});
  run_ok({"--seed", "11", "words", "segment", "--proteins", ds.proteins_jsonl, "--attn-dir",
          ds.attn_dir, "--emb-dir", ds.emb_dir, "--out", dir + "/words.jsonl", "--emb-out",
          dir + "/words.pweb", "--edge-threshold", "0.5"});
  run_ok({"--seed", "11", "words", "dict", "--words", dir + "/words.jsonl", "--emb",
          dir + "/words.pweb", "--min-count", "2", "--out", dir + "/dict.json",
          "--filtered-out", dir + "/words_f.jsonl", "--filtered-emb", dir + "/words_f.pweb"});
  run_ok({"--seed", "11", "data", "ingest", "--affinity", ds.affinity_jsonl, "--proteins",
          ds.proteins_jsonl, "--out", dir + "/records.jsonl"});
  run_ok({"--seed", "11", "data", "split", "--records", dir + "/records.jsonl", "--mode",
          "novel_protein", "--out", dir + "/splits.json"});
  run_ok({"--seed", "11", "data", "label", "--records", dir + "/records.jsonl", "--library",
          dir + "/fragments.jsonl", "--subset", dir + "/splits.json", "--set", "train", "--out",
          dir + "/labels_train.tsv"});
  run_ok({"--seed", "11", "data", "label", "--records", dir + "/records.jsonl", "--library",
          dir + "/fragments.jsonl", "--subset", dir + "/splits.json", "--set", "val", "--out",
          dir + "/labels_val.tsv"});
  run_ok({"--seed", "11", "model", "train", "--train-labels", dir + "/labels_train.tsv",
          "--val-labels", dir + "/labels_val.tsv", "--words", dir + "/words.jsonl", "--emb",
          dir + "/words.pweb", "--fragments", dir + "/fragments.jsonl", "--checkpoint",
          dir + "/model.pwck", "--log", dir + "/log.tsv", "--max-epochs", "60", "--batch-size",
          "32", "--patience", "30"});
  run_ok({"--seed", "11", "model", "predict", "--checkpoint", dir + "/model.pwck", "--words",
          dir + "/words.jsonl", "--emb", dir + "/words.pweb", "--fragments",
          dir + "/fragments.jsonl", "--out", dir + "/preds.tsv"});
  run_ok({"--seed", "11", "rules", "extract", "--checkpoint", dir + "/model.pwck", "--words",
          dir + "/words.jsonl", "--emb", dir + "/words.pweb", "--labels",
          dir + "/labels_train.tsv", "--fragments", dir + "/fragments.jsonl", "--out",
          dir + "/rules_raw.jsonl", "--ig-steps", "32"});
  run_ok({"--seed", "11", "rules", "accuracy", "--rules", dir + "/rules_raw.jsonl", "--words",
          dir + "/words.jsonl", "--labels", dir + "/labels_train.tsv", "--out",
          dir + "/rules_acc.jsonl"});
  run_ok({"--seed", "11", "rules", "filter", "--rules", dir + "/rules_acc.jsonl", "--out",
          dir + "/rules.jsonl"});
  run_ok({"--seed", "11", "rules", "compile", "--rules", dir + "/rules.jsonl", "--out",
          dir + "/rules.pwdb"});
  run_ok({"--seed", "11", "words", "segment", "--proteins", ds.query_proteins_jsonl, "--attn-dir",
          ds.query_attn_dir, "--out", dir + "/query_words.jsonl", "--edge-threshold", "0.5"});
  run_ok({"--seed", "11", "predict-fragments", "--rules", dir + "/rules.pwdb", "--words",
          dir + "/query_words.jsonl", "--out", dir + "/pred_frags.jsonl"});
  run_ok({"--seed", "11", "screen", "score", "--rules", dir + "/rules.pwdb", "--query-words",
          dir + "/query_words.jsonl", "--library", ds.screen_molecules_tsv, "--fragments",
          dir + "/fragments.jsonl", "--out", dir + "/screen.tsv"});
  run_ok({"--seed", "11", "screen", "metrics", "--ranking", dir + "/screen.tsv", "--actives",
          ds.screen_actives_txt, "--out", dir + "/metrics.json"});

  // the compiled index and the jsonl route answer queries identically
  rules::RuleDB from_jsonl = formats::read_rules_any(dir + "/rules.jsonl");
  rules::RuleDB from_pwdb = formats::read_rules_any(dir + "/rules.pwdb");
  REQUIRE(from_jsonl.size() == from_pwdb.size());
  for (size_t i = 0; i < from_jsonl.size(); ++i) {
    CHECK(from_jsonl.records()[i].word_key == from_pwdb.records()[i].word_key);
    CHECK(from_jsonl.records()[i].fragment_id == from_pwdb.records()[i].fragment_id);
    CHECK(from_jsonl.records()[i].rule_score ==
          doctest::Approx(from_pwdb.records()[i].rule_score).epsilon(1e-12));
  }

  // planted pair present in the filtered rules
  frag::FragmentLibrary lib = formats::read_fragments_jsonl(dir + "/fragments.jsonl");
  const frag::Fragment* planted =
      lib.by_key(chem::canonical_key(chem::parse_smiles(ds.planted_fragment_smiles)));
  REQUIRE(planted != nullptr);
  bool planted_rule = false;
  for (const auto& r : from_jsonl.records())
    if (r.word_key == ds.planted_word && r.fragment_id == planted->fragment_id)
      planted_rule = true;
  CHECK(planted_rule);

  // screening enriches the planted actives
  json m = json::parse(read_file(dir + "/metrics.json"));
  CHECK(m["ef"]["ef_5pct"].get<double>() >= 5.0);

  // coverage: every screen molecule embeds a ring from the same generator pool
  json cov = json::parse(read_file(dir + "/coverage.json"));
  CHECK(cov["coverage"].get<double>() == doctest::Approx(1.0));

  // dictionary keeps only cross-protein words; the filtered files stay aligned
  auto filtered = formats::read_words_jsonl(dir + "/words_f.jsonl");
  auto filtered_emb = formats::read_pweb(dir + "/words_f.pweb");
  CHECK(filtered.size() == filtered_emb.size());
  CHECK(filtered.size() > 0);

  // model predict emits one probability per (protein, fragment)
  long pred_rows = 0;
  for_each_data_line(dir + "/preds.tsv", [&](const std::string& line, size_t) {
    auto cols = split(line, '\t');
    REQUIRE(cols.size() == 3);
    double p = std::stod(cols[2]);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    ++pred_rows;
  });
  CHECK(pred_rows == static_cast<long>(20 * lib.fragments.size()));
}
